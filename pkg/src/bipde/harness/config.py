"""Flat ``key = value`` experiment configuration.

A config file is plain text, one ``key = value`` per line, ``#`` starts a
comment. ``kind`` selects the experiment and with it the set of accepted keys
and their defaults (see :data:`SCHEMAS`). Lines ``sweep.<key> = v1,v2,...``
declare sweep axes over ordinary keys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class Key:
    type: str          # int, float, str, bool, floats
    default: Any
    help: str = ""


def _parse_value(raw: str, kind: str, name: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind}") from None


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


_TRAINING = {
    "seed": Key("int", 0, "seed for initialisation and minibatch order"),
    "mode": Key("str", "direct", "direct (trainable bottleneck values) or encoder"),
    "encoder": Key("str", "", "encoder layer spec; empty uses the estimator default"),
    "epochs": Key("int", 100, "training epochs"),
    "batch_size": Key("int", 0, "minibatch size; 0 means full batch"),
    "lr": Key("float", 1e-2, "Adam learning rate"),
    "eps": Key("float", 1e-8, "Adam epsilon"),
    "loss": Key("str", "mse", "mse or mae"),
    "dropout": Key("float", 0.0, "dropout rate for 'o' encoder tokens"),
    "newton_steps": Key("int", 0, "Newton polish steps after Adam (direct mode)"),
    "noise_std": Key("float", 0.0, "std of Gaussian noise added to the observations"),
    "noise_seed": Key("int", 1, "seed of the noise draw"),
    "workers": Key("int", 1, "process pool width for sweeps"),
}

_INVERSE = {
    "n_samples": Key("int", 1000, "ensemble size"),
    "n_train": Key("int", 900, "samples used for training; the rest are held out"),
    "data_seed": Key("int", 0, "seed of the coefficient draw"),
    "a_range": Key("floats", (0.25, 0.75), "range of the random coefficients"),
    "ood_range": Key("floats", (0.15, 0.85), "range for the out-of-range report; empty skips it"),
    "n_ood": Key("int", 100, "size of the out-of-range set"),
    "bounds": Key("floats", (0.0, 1.0), "bottleneck scaling range for each coefficient"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "poisson_case1": {
        "grid_n": Key("int", 32, "nodes per axis"),
        "half_width": Key("float", 1.0 / math.sqrt(2.0), "half side of the square domain"),
        "piston_range": Key("floats", (0.5, 2.5), "D_min, D_max of the constant mode"),
        "tilt_range": Key("floats", (-0.5, 0.5), "range of both tilt coefficients"),
        "epochs": Key("int", 300, ""),
        "dropout": Key("float", 0.2, ""),
    },
    "poisson_case2": {
        "grid_n": Key("int", 32, "nodes per axis"),
        "half_width": Key("float", 1.0 / math.sqrt(2.0), "half side of the square domain"),
        "a0": Key("float", 0.5, "piston coefficient"),
        "a1": Key("float", 0.25, "x tilt coefficient"),
        "a2": Key("float", -0.25, "y tilt coefficient"),
        "a3": Key("float", 0.2, "defocus coefficient"),
        "coef_range": Key("floats", (-1.0, 1.0), "bottleneck range of every coefficient"),
        "epochs": Key("int", 100, ""),
        "loss": Key("str", "mae", ""),
        "dropout": Key("float", 0.2, ""),
    },
    "poisson_inverse_1d": {
        **_INVERSE,
        "grid_n": Key("int", 160, "nodes"),
        "mode": Key("str", "encoder", ""),
        "epochs": Key("int", 1000, ""),
        "batch_size": Key("int", 100, ""),
        "lr": Key("float", 1e-3, ""),
    },
    "poisson_inverse_2d": {
        **_INVERSE,
        "grid_n": Key("int", 30, "nodes per axis"),
        "mode": Key("str", "encoder", ""),
        "encoder": Key("str", "c32,a,c64,a,f,d128", ""),
        "epochs": Key("int", 300, ""),
        "batch_size": Key("int", 100, ""),
        "lr": Key("float", 1e-3, ""),
    },
    "burgers_sweep": {
        "n_x": Key("int", 640, "grid nodes"),
        "dt": Key("float", 1e-3, "time step"),
        "t_final": Key("float", 0.2, "length of the observed trajectory"),
        "p": Key("int", 1, "shift between input and target snapshots"),
        "nu": Key("float", 0.01 / math.pi, "true viscosity"),
        "gamma": Key("float", 1.0, "true convection factor"),
        "unknowns": Key("int", 1, "1 recovers nu, 2 recovers nu and gamma"),
        "nu_range": Key("floats", (0.0, 0.01), "bottleneck range of nu"),
        "gamma_range": Key("floats", (0.5, 2.0), "bottleneck range of gamma"),
        "reference": Key("str", "exact", "data source: exact or solver"),
        "epochs": Key("int", 200, ""),
        "eps": Key("float", 1e-16, ""),
        "newton_steps": Key("int", 8, ""),
    },
    "rbf_recover": {
        "nu": Key("float", 0.01 / math.pi, "true viscosity"),
        "gamma": Key("float", 1.0, "true convection factor"),
        "n_ref": Key("int", 640, "nodes of the reference solution"),
        "dt": Key("float", 1e-3, "time step"),
        "t_final": Key("float", 0.2, "length of the observed trajectory"),
        "p": Key("int", 10, "shift between input and target snapshots"),
        "n_s": Key("int", 20, "number of basis functions"),
        "n_d": Key("int", 80, "number of collocation points"),
        "points": Key("str", "uniform", "uniform or random collocation points"),
        "points_seed": Key("int", 1, "seed of the random points"),
        "nu_range": Key("floats", (0.0, 0.01), "bottleneck range of nu"),
        "c_range": Key("floats", (0.01, 1.0), "range of the shape parameters"),
        "c_init": Key("float", 0.25, "initial shape parameter"),
        "epochs": Key("int", 100, ""),
        "lr": Key("float", 0.02, ""),
        "eps": Key("float", 1e-16, ""),
    },
    "rbf_inverse": {
        "nu_min": Key("float", 0.1 / math.pi, "smallest viscosity of the family"),
        "nu_max": Key("float", 1.0 / math.pi, "largest viscosity of the family"),
        "n_nu": Key("int", 50, "number of viscosities"),
        "n_test": Key("int", 10, "viscosities held out for testing"),
        "n_x": Key("int", 80, "sample points per snapshot"),
        "dt": Key("float", 5e-4, "time step"),
        "t_final": Key("float", 0.2, "trajectory length"),
        "n_instances": Key("int", 10, "snapshots sampled per trajectory"),
        "p": Key("int", 1, "shift between input and target snapshots"),
        "n_s": Key("int", 20, "number of basis functions"),
        "c_range": Key("floats", (0.01, 1.0), "range of the shape parameters"),
        "mode": Key("str", "encoder", ""),
        "encoder": Key("str", "c32:5,p,c16:5,p,f,d100", ""),
        "epochs": Key("int", 50, ""),
        "batch_size": Key("int", 50, ""),
        "lr": Key("float", 1e-3, ""),
    },
}

KINDS = tuple(SCHEMAS)


def schema(kind: str) -> dict[str, Key]:
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    return {**_TRAINING, **SCHEMAS[kind]}


@dataclass
class ExperimentConfig:
    """Resolved settings of one experiment; every key of the kind's schema is present."""

    kind: str
    values: dict = field(default_factory=dict)
    axes: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = schema(self.kind)
        resolved = {name: key.default for name, key in keys.items()}
        for name, value in self.values.items():
            if name not in keys:
                raise ConfigError(f"unknown key {name!r} for kind {self.kind}")
            if isinstance(value, str) and keys[name].type != "str":
                value = _parse_value(value, keys[name].type, name)
            resolved[name] = value
        self.values = resolved
        for name in self.axes:
            if name not in keys or name == "kind":
                raise ConfigError(f"cannot sweep over {name!r}")
        self.validate()

    def validate(self) -> None:
        v = self.values
        if v["mode"] not in ("direct", "encoder"):
            raise ConfigError(f"mode must be direct or encoder, got {v['mode']!r}")
        if v["loss"] not in ("mse", "mae"):
            raise ConfigError(f"loss must be mse or mae, got {v['loss']!r}")
        for name in ("epochs", "batch_size", "newton_steps"):
            if v[name] < 0:
                raise ConfigError(f"{name} must be non-negative")
        if v["workers"] < 1:
            raise ConfigError("workers must be at least 1")
        if not v["lr"] > 0 or not v["eps"] > 0:
            raise ConfigError("lr and eps must be positive")
        if v["noise_std"] < 0 or not 0 <= v["dropout"] < 1:
            raise ConfigError("noise_std must be >= 0 and dropout in [0, 1)")
        for name, key in schema(self.kind).items():
            if key.type == "floats" and name != "ood_range" and len(v[name]) != 2:
                raise ConfigError(f"{name} needs two comma-separated numbers")
            if key.type == "floats" and len(v[name]) == 2 and not v[name][0] < v[name][1]:
                raise ConfigError(f"{name} must be increasing")
        if "n_train" in v and not 0 < v["n_train"] < v["n_samples"]:
            raise ConfigError("need 0 < n_train < n_samples")
        if v.get("unknowns", 1) not in (1, 2):
            raise ConfigError("unknowns must be 1 or 2")
        if v.get("points", "uniform") not in ("uniform", "random"):
            raise ConfigError("points must be uniform or random")
        if v.get("reference", "exact") not in ("exact", "solver"):
            raise ConfigError("reference must be exact or solver")

    def __getitem__(self, name):
        return self.values[name]

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(self.kind, {**self.values, **changes}, dict(self.axes))

    def to_text(self) -> str:
        lines = [f"kind = {self.kind}"]
        lines += [f"{k} = {_format_value(v)}" for k, v in self.values.items()]
        lines += [f"sweep.{k} = {','.join(vals)}" for k, vals in self.axes.items()]
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {"kind": self.kind, **{k: _format_value(v) for k, v in self.values.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ConfigError("missing 'kind'")
        axes = {k[6:]: v for k, v in d.items() if k.startswith("sweep.")}
        values = {k: v for k, v in d.items() if not k.startswith("sweep.")}
        return cls(kind, values, axes)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        entries: dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, sep, value = line.partition("=")
            name = name.strip()
            if not sep or not name:
                raise ConfigError(f"line {number}: expected 'key = value'")
            if name in entries:
                raise ConfigError(f"line {number}: duplicate key {name!r}")
            entries[name] = value.strip()
        for name in [k for k in entries if k.startswith("sweep.")]:
            entries[name] = parse_axis_values(entries[name])
        return cls.from_dict(entries)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)


def parse_axis_values(raw: str) -> list[str]:
    return [v.strip() for v in raw.split(",") if v.strip()]


def parse_axis(spec: str) -> tuple[str, list[str]]:
    """``name=v1,v2`` to ``(name, ["v1", "v2"])``; an empty value list is allowed."""
    name, sep, raw = spec.partition("=")
    if not sep or not name.strip():
        raise ConfigError(f"axis must look like name=v1,v2 (got {spec!r})")
    return name.strip(), parse_axis_values(raw)


def describe(kind: str) -> str:
    """Human-readable key listing for ``kind``."""
    lines = [f"# keys for kind = {kind}"]
    for name, key in schema(kind).items():
        note = f"  # {key.help}" if key.help else ""
        lines.append(f"{name} = {_format_value(key.default)}{note}")
    return "\n".join(lines)
