"""Training runs, encoder evaluation, sweeps and result export."""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, autodiff as ad, burgers_fd, container, datagen, nn, rbf
from ..estimators import TrainingError
from .config import ConfigError, ExperimentConfig
from .experiments import get_experiment, rbf_points
from .metrics import MetricsReport, Section, csv_text, failure_row, param_stats

log = logging.getLogger(__name__)

NUMERICAL_ERRORS = (TrainingError, ad.NonFiniteError, burgers_fd.BlowUpError,
                    np.linalg.LinAlgError, FloatingPointError)


class NumericalFailure(RuntimeError):
    """Training aborted on a non-finite loss, a solver blow-up or a singular system."""


@dataclass
class RunResult:
    config: ExperimentConfig
    report: MetricsReport
    estimator: object
    checkpoint: bytes
    meta: dict = field(default_factory=dict)


def generate(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Arrays and metadata of the dataset ``cfg`` trains on."""
    arrays, noise = get_experiment(cfg.kind).make_data(cfg)
    meta = {"config": cfg.as_dict(), "noise": noise,
            "param_names": get_experiment(cfg.kind).param_names(cfg)}
    return arrays, meta


def train(cfg: ExperimentConfig, data: tuple[dict, dict] | None = None) -> RunResult:
    """Fit the experiment's estimator and evaluate the recovered parameters.

    Raises
    ------
    NumericalFailure
        If the loss goes non-finite, the solver blows up or a system is singular.
    """
    exp = get_experiment(cfg.kind)
    arrays, meta = data if data is not None else generate(cfg)
    est = exp.make_estimator(cfg, arrays)
    start = time.perf_counter()
    try:
        est.fit(arrays["X"][arrays["train"]])
        sections, preds = exp.evaluate(cfg, est, arrays)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"{cfg.kind}: {exc}") from exc
    log.info("%s trained in %.1f s", cfg.kind, time.perf_counter() - start)
    report = MetricsReport(cfg.kind, float(est.final_loss_), list(est.history_), sections, preds)
    ckpt_meta = {"config": cfg.as_dict(), "state": est.fitted_state(),
                 "param_names": exp.param_names(cfg), "version": __version__}
    return RunResult(cfg, report, est, nn.checkpoint_bytes(est.model_, ckpt_meta), meta)


def load_estimator(checkpoint):
    """Rebuild a fitted estimator (and its config) from checkpoint bytes or a path."""
    if isinstance(checkpoint, (bytes, bytearray)):
        model = nn.checkpoint_from_bytes(bytes(checkpoint))
    else:
        model = nn.load_checkpoint(checkpoint)
    saved = model.meta
    if "config" not in saved or "state" not in saved:
        raise container.ContainerError("checkpoint was not written by the experiment runner")
    cfg = ExperimentConfig.from_dict(saved["config"])
    est = get_experiment(cfg.kind).make_estimator(cfg, _estimator_arrays(cfg))
    est.restore(model, saved["state"])
    return est, cfg


def _estimator_arrays(cfg) -> dict:
    # RBF estimators need their collocation points back; they derive from the config alone
    if cfg.kind == "rbf_recover":
        return {"points": rbf_points(cfg)}
    if cfg.kind == "rbf_inverse":
        return {"points": rbf.RBFConfig(N_s=cfg["n_s"], N_d=cfg["n_x"]).collocation()}
    return {}


@dataclass
class Evaluation:
    predictions: np.ndarray
    r2: dict[str, float]
    section: Section


def evaluate_encoder(checkpoint, X, y=None) -> Evaluation:
    """Inference with a saved model (dropout off); R^2 per parameter when ``y`` is given."""
    est, cfg = load_estimator(checkpoint)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1:] != tuple(est.sample_shape_):
        raise ValueError(f"dataset samples have shape {X.shape[1:]}, the model expects "
                         f"{tuple(est.sample_shape_)}")
    try:
        pred = est.predict(X)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(str(exc)) from exc
    names = get_experiment(cfg.kind).param_names(cfg)
    truth = pred if y is None else np.asarray(y, dtype=np.float64).reshape(len(X), -1)
    sec = Section("eval", param_stats(names, truth, pred), len(pred))
    r2 = {p.name: (p.r2 if y is not None else math.nan) for p in sec.params}
    return Evaluation(pred, r2, sec)


# -- sweeps ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    assignment: dict
    report: MetricsReport | None = None
    error: str = ""

    @property
    def axis(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.assignment.items())


def _run_cell(config_dict: dict, assignment: dict) -> SweepCell:
    try:
        cfg = ExperimentConfig.from_dict({**config_dict, **assignment})
        return SweepCell(assignment, train(cfg).report)
    except Exception as exc:  # a failed cell is recorded, never fatal
        return SweepCell(assignment, error=f"{type(exc).__name__}: {exc}")


def sweep(cfg: ExperimentConfig, axes: dict | None = None, workers: int | None = None
          ) -> list[SweepCell]:
    """Train every cell of the cartesian product of ``axes`` (name -> list of values).

    Axes default to the ``sweep.*`` entries of ``cfg``; cells run in a process
    pool of ``workers`` (default ``cfg["workers"]``) and come back in product
    order.
    """
    axes = dict(cfg.axes if axes is None else axes)
    if not axes:
        raise ConfigError("a sweep needs at least one axis")
    for name in axes:
        if name not in cfg.values:
            raise ConfigError(f"cannot sweep over unknown key {name!r}")
    names = list(axes)
    cells = [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]
    base = cfg.as_dict()
    workers = int(workers or cfg["workers"])
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, [base] * len(cells), cells))
    return [_run_cell(base, cell) for cell in cells]


def sweep_rows(cfg: ExperimentConfig, cells: list[SweepCell]) -> list[dict]:
    rows = []
    for cell in cells:
        if cell.report is None:
            rows.append(failure_row(cfg.kind, cell.axis, cell.error))
        else:
            rows.extend(cell.report.rows(cell.axis))
    return rows


# -- RBF noise study -------------------------------------------------------------------

#: The noisy recovery cases on scattered points plus a noiseless baseline.
RBF_CASES = {
    "baseline": dict(nu=0.01 / math.pi, p=10, n_d=80, noise_std=0.0, epochs=100,
                     nu_range=(0.0, 0.01), points="uniform"),
    "case1": dict(nu=0.1 / math.pi, p=10, n_d=80, noise_std=0.01, epochs=100,
                  nu_range=(0.0, 0.1), points="random"),
    "case2": dict(nu=0.1 / math.pi, p=100, n_d=200, noise_std=0.05, epochs=150,
                  nu_range=(0.0, 0.1), points="random"),
    "case3": dict(nu=0.01 / math.pi, p=100, n_d=80, noise_std=0.01, epochs=200,
                  nu_range=(0.0, 0.01), points="random"),
    "case4": dict(nu=0.01 / math.pi, p=100, n_d=200, noise_std=0.05, epochs=150,
                  nu_range=(0.0, 0.01), points="random"),
}


def run_rbf_noise_cases(cases=("case1", "case2", "case3", "case4"), overrides: dict | None = None,
                        workers: int = 1) -> list[SweepCell]:
    """Run the named entries of :data:`RBF_CASES` as ``rbf_recover`` experiments.

    ``overrides`` applies to every case (e.g. fewer epochs); each cell's
    ``assignment`` records the case name.
    """
    overrides = overrides or {}
    configs = []
    for name in cases:
        if name not in RBF_CASES:
            raise ConfigError(f"unknown RBF case {name!r}")
        configs.append(ExperimentConfig("rbf_recover", {**RBF_CASES[name], **overrides}).as_dict())
    empty = [{}] * len(configs)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, configs, empty))
    else:
        cells = [_run_cell(c, {}) for c in configs]
    for cell, name in zip(cells, cases):
        cell.assignment = {"case": name}
    return cells


# -- export ----------------------------------------------------------------------------

def manifest_text(cfg: ExperimentConfig) -> str:
    return (f"# bipde {__version__} run manifest; rerun with this file as --config\n"
            + cfg.to_text())


def export_results(result, out_dir, cfg: ExperimentConfig | None = None) -> dict[str, Path]:
    """Write ``results.csv``, ``manifest.txt`` and, for a single run, ``checkpoint.bin``
    and ``history.csv``.

    ``result`` is a :class:`RunResult`, a :class:`MetricsReport` or a list of
    :class:`SweepCell`; the latter two need ``cfg`` for the manifest.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = {}
    if isinstance(result, RunResult):
        cfg = result.config
        report = result.report
        rows = report.rows()
        written["checkpoint"] = out / "checkpoint.bin"
        written["checkpoint"].write_bytes(result.checkpoint)
    elif isinstance(result, MetricsReport):
        report, rows = result, result.rows()
    else:
        report = None
        if cfg is None:
            raise ValueError("sweep export needs the config")
        rows = sweep_rows(cfg, list(result))
    written["csv"] = out / "results.csv"
    written["csv"].write_text(csv_text(rows))
    if report is not None:
        written["history"] = out / "history.csv"
        written["history"].write_text(
            "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(report.history)))
    if cfg is not None:
        written["manifest"] = out / "manifest.txt"
        written["manifest"].write_text(manifest_text(cfg))
    return written


def save_generated(cfg: ExperimentConfig, out_dir) -> Path:
    arrays, meta = generate(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = datagen.save_dataset(out / "dataset.bin", arrays, meta)
    (out / "manifest.txt").write_text(manifest_text(cfg))
    return path
