"""Recovery metrics and the fixed CSV schema."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import r2_score

#: Column order of every results CSV.
#:
#: ``true_mean``/``mean``/``std`` summarise the truth and the recovered values
#: over the samples (or shift pairs) of a section; ``bias = mean - true_mean``;
#: ``rel_error = |bias| / |true_mean|``; ``mae`` is the per-sample mean
#: absolute error; ``r2`` is empty when the truth does not vary. ``mae_D``,
#: ``linf_D`` and ``max_rel_D`` compare recovered and true diffusion fields
#: node by node and are empty for experiments without one.
CSV_COLUMNS = ("experiment", "section", "axis", "param", "true_mean", "mean", "std", "bias",
               "rel_error", "mae", "r2", "mae_D", "linf_D", "max_rel_D", "final_loss",
               "n_samples", "status", "message")


@dataclass
class ParamStats:
    name: str
    true_mean: float
    mean: float
    std: float
    mae: float
    r2: float

    @property
    def bias(self) -> float:
        return self.mean - self.true_mean

    @property
    def rel_error(self) -> float:
        return abs(self.bias) / abs(self.true_mean) if self.true_mean else math.nan


@dataclass
class Section:
    """Metrics of one evaluation set (training fit, held-out test, out-of-range, ...)."""

    name: str
    params: list[ParamStats]
    n_samples: int
    mae_D: float = math.nan
    linf_D: float = math.nan
    max_rel_D: float = math.nan

    def param(self, name: str) -> ParamStats:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def r2(self) -> dict[str, float]:
        return {p.name: p.r2 for p in self.params}


@dataclass
class MetricsReport:
    experiment: str
    final_loss: float
    history: list[float]
    sections: list[Section] = field(default_factory=list)
    predictions: dict[str, np.ndarray] = field(default_factory=dict)

    def section(self, name: str) -> Section:
        for s in self.sections:
            if s.name == name:
                return s
        raise KeyError(f"no section {name!r}; have {[s.name for s in self.sections]}")

    def rows(self, axis: str = "") -> list[dict]:
        out = []
        for sec in self.sections:
            for p in sec.params:
                out.append({
                    "experiment": self.experiment, "section": sec.name, "axis": axis,
                    "param": p.name, "true_mean": p.true_mean, "mean": p.mean, "std": p.std,
                    "bias": p.bias, "rel_error": p.rel_error, "mae": p.mae, "r2": p.r2,
                    "mae_D": sec.mae_D, "linf_D": sec.linf_D, "max_rel_D": sec.max_rel_D,
                    "final_loss": self.final_loss, "n_samples": sec.n_samples,
                    "status": "ok", "message": "",
                })
        return out


def r2_per_param(truth, pred) -> np.ndarray:
    """``1 - SS_res / SS_tot`` per column; NaN where the truth is constant."""
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if truth.shape != pred.shape:
        raise ValueError(f"truth {truth.shape} and predictions {pred.shape} differ")
    out = np.full(truth.shape[1], np.nan)
    if len(truth) < 2:
        return out
    varies = np.ptp(truth, axis=0) > 0
    if varies.any():
        out[varies] = r2_score(truth[:, varies], pred[:, varies], multioutput="raw_values")
    return out


def param_stats(names, truth, pred) -> list[ParamStats]:
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if len(pred) == 1 and len(truth) > 1:
        # one shared estimate for many observations of the same truth
        truth = truth.mean(axis=0, keepdims=True)
    r2 = r2_per_param(truth, pred)
    return [ParamStats(name, float(truth[:, k].mean()), float(pred[:, k].mean()),
                       float(pred[:, k].std()), float(np.abs(pred[:, k] - truth[:, k]).mean()),
                       float(r2[k]))
            for k, name in enumerate(names)]


def field_errors(D_true, D_hat) -> dict[str, float]:
    """Node-wise MAE, maximum error and maximum relative error of recovered fields."""
    D_true = np.asarray(D_true, dtype=np.float64)
    err = np.abs(np.asarray(D_hat, dtype=np.float64) - D_true)
    return {"mae_D": float(err.mean()), "linf_D": float(err.max()),
            "max_rel_D": float((err / np.abs(D_true)).max())}


def _cell(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in CSV_COLUMNS})
    return buf.getvalue()


def failure_row(experiment: str, axis: str, message: str) -> dict:
    return {"experiment": experiment, "axis": axis, "status": "failed", "message": message}
