"""Data, estimator and evaluation recipe for each experiment kind."""
from __future__ import annotations

import math

import numpy as np

from .. import datagen, rbf
from ..estimators import (BurgersFDEstimator, BurgersRBFEstimator, Poisson1DEstimator,
                          PoissonZernikeEstimator)
from ..poisson import Grid2D, PoissonProblem, solve_2d
from .config import ConfigError, ExperimentConfig
from .metrics import Section, field_errors, param_stats

SQRT3 = math.sqrt(3.0)


# module-level so estimators stay picklable
def tilted_source(X, Y):
    return np.sin(np.pi * X) * np.cos(np.pi * Y)


def tilted_boundary(X, Y):
    return 0.01 * np.cos(np.pi * X) * np.cos(np.pi * Y)


def linear_source(X, Y):
    return X + Y


def cosine_boundary(X, Y):
    return np.cos(np.pi * X) * np.cos(np.pi * Y)


def _opt(value):
    return value or None


def _training_kwargs(cfg: ExperimentConfig) -> dict:
    return dict(mode=cfg["mode"], encoder=_opt(cfg["encoder"]), epochs=cfg["epochs"],
                batch_size=_opt(cfg["batch_size"]), lr=cfg["lr"], eps=cfg["eps"],
                loss=cfg["loss"], dropout=cfg["dropout"], newton_steps=cfg["newton_steps"],
                random_state=cfg["seed"])


def _noisy(clean, cfg: ExperimentConfig, offset: int = 0):
    return datagen.add_noise(clean, cfg["noise_std"], cfg["noise_seed"] + offset)


def _noise_meta(clean, noisy) -> dict:
    return datagen.noise_report(clean, noisy) if not np.array_equal(clean, noisy) else {
        "noise_std": 0.0, "noise_rms_relative": 0.0}


class Experiment:
    """Recipe interface.

    ``make_data`` returns ``(arrays, meta)`` where ``arrays`` holds at least
    ``X`` (observations as fed to the estimator), ``y`` (true hidden
    parameters per sample) and ``train`` (indices used for fitting).
    """

    kind = ""
    #: single-dataset recovery (report on the fitted samples) vs inverse transform
    inverse = False

    def param_names(self, cfg: ExperimentConfig) -> list[str]:
        raise NotImplementedError

    def make_data(self, cfg: ExperimentConfig) -> tuple[dict, dict]:
        raise NotImplementedError

    def make_estimator(self, cfg: ExperimentConfig, arrays: dict):
        raise NotImplementedError

    def fields(self, est, params: np.ndarray):
        """Diffusion fields for parameter rows, or ``None`` if the experiment has none."""
        return None

    def _section(self, name, est, X, y, names) -> Section:
        pred = est.predict(X)
        sec = Section(name, param_stats(names, y, pred), len(pred))
        D_hat = self.fields(est, pred)
        if D_hat is not None:
            truth = y if len(pred) == len(y) else y[:1]
            errs = field_errors(self.fields(est, truth), D_hat)
            sec.mae_D, sec.linf_D, sec.max_rel_D = errs["mae_D"], errs["linf_D"], errs["max_rel_D"]
        return sec

    def evaluate(self, cfg: ExperimentConfig, est, arrays: dict) -> tuple[list[Section], dict]:
        names = self.param_names(cfg)
        X, y, train = arrays["X"], arrays["y"], arrays["train"]
        if not self.inverse or est.model_.is_direct:
            sec = self._section("fit", est, X[train], y[train], names)
            return [sec], {"fit": est.predict(X[train])}
        test = np.setdiff1d(np.arange(len(X)), train)
        sections, preds = [], {}
        for name, Xs, ys in (("train", X[train], y[train]), ("test", X[test], y[test]),
                             ("ood", arrays.get("X_ood"), arrays.get("y_ood"))):
            if Xs is None or not len(Xs):
                continue
            sections.append(self._section(name, est, Xs, ys, names))
            preds[name] = est.predict(Xs)
        return sections, preds


class PoissonCase1(Experiment):
    kind = "poisson_case1"

    def param_names(self, cfg):
        return ["piston", "tilt_y", "tilt_x"]

    def grid(self, cfg):
        return Grid2D.square(cfg["half_width"], cfg["grid_n"])

    def make_data(self, cfg):
        grid = self.grid(cfg)
        X, Y = grid.mesh()
        D = math.sqrt(2.0) + 0.1 * (Y - X)
        u = solve_2d(PoissonProblem(grid, D, tilted_source(X, Y), tilted_boundary(X, Y)),
                     full=True).data[None]
        noisy = _noisy(u, cfg)
        y = np.array([[math.sqrt(2.0), 0.1, -0.1]])
        return ({"X": noisy, "y": y, "train": np.array([0]), "clean": u},
                _noise_meta(u, noisy))

    def make_estimator(self, cfg, arrays):
        lo, hi = cfg["piston_range"], cfg["tilt_range"]
        return PoissonZernikeEstimator(
            modes=((0, 0, "even"), (1, 1, "odd"), (1, 1, "even")), bounds=[lo, hi, hi],
            half_width=cfg["half_width"], source=tilted_source, boundary=tilted_boundary,
            per_sample=False, **_training_kwargs(cfg))

    def fields(self, est, params):
        return est.diffusion(np.atleast_2d(params)).data


class PoissonCase2(PoissonCase1):
    kind = "poisson_case2"

    def param_names(self, cfg):
        return ["a0", "a1", "a2", "a3"]

    def make_data(self, cfg):
        grid = self.grid(cfg)
        X, Y = grid.mesh()
        a = np.array([cfg["a0"], cfg["a1"], cfg["a2"], cfg["a3"]])
        D = 4.0 + a[0] + 2 * a[1] * X + 2 * a[2] * Y + SQRT3 * a[3] * (2 * X ** 2 + 2 * Y ** 2 - 1)
        if np.any(D <= 0):
            raise ConfigError("the configured coefficients make D non-positive")
        u = solve_2d(PoissonProblem(grid, D, linear_source(X, Y), cosine_boundary(X, Y)),
                     full=True).data[None]
        noisy = _noisy(u, cfg)
        return ({"X": noisy, "y": a[None], "train": np.array([0]), "clean": u},
                _noise_meta(u, noisy))

    def make_estimator(self, cfg, arrays):
        return PoissonZernikeEstimator(
            modes=((0, 0, "even"), (1, 1, "even"), (1, 1, "odd"), (2, 0, "even")),
            coef_scale=(1.0, 2.0, 2.0, SQRT3), offset=4.0, bounds=cfg["coef_range"],
            half_width=cfg["half_width"], source=linear_source, boundary=cosine_boundary,
            per_sample=False, **_training_kwargs(cfg))


class _Inverse(Experiment):
    inverse = True
    dim = 1

    def param_names(self, cfg):
        return ["a0", "a1"]

    def make_data(self, cfg):
        ens = datagen.gen_poisson_ensemble(self.dim, cfg["n_samples"], cfg["data_seed"],
                                           cfg["a_range"], cfg["grid_n"])
        noisy = _noisy(ens.fields, cfg)
        arrays = {"X": noisy, "y": ens.coeffs, "train": np.arange(cfg["n_train"])}
        if len(cfg["ood_range"]) == 2 and cfg["n_ood"] > 0:
            ood = datagen.gen_poisson_ensemble(self.dim, cfg["n_ood"], cfg["data_seed"] + 1,
                                               cfg["ood_range"], cfg["grid_n"])
            arrays["X_ood"] = _noisy(ood.fields, cfg, offset=1)
            arrays["y_ood"] = ood.coeffs
        return arrays, _noise_meta(ens.fields, noisy)


class PoissonInverse1D(_Inverse):
    kind = "poisson_inverse_1d"

    def make_estimator(self, cfg, arrays):
        grid = datagen.POISSON_1D
        return Poisson1DEstimator(bounds=cfg["bounds"], x_lo=grid["x_lo"], x_hi=grid["x_hi"],
                                  u_bc=grid["u_bc"], per_sample=True, **_training_kwargs(cfg))

    def fields(self, est, params):
        return est.diffusion(np.atleast_2d(params)).data


class PoissonInverse2D(_Inverse):
    kind = "poisson_inverse_2d"
    dim = 2

    def make_estimator(self, cfg, arrays):
        return PoissonZernikeEstimator(
            modes=((1, 1, "odd"), (2, 0, "even")), coef_scale=(2.0, SQRT3), offset=4.0,
            bounds=cfg["bounds"], half_width=datagen.POISSON_2D["half_width"],
            source=linear_source, boundary=cosine_boundary, per_sample=True,
            **_training_kwargs(cfg))

    def fields(self, est, params):
        return est.diffusion(np.atleast_2d(params)).data


class BurgersRecovery(Experiment):
    kind = "burgers_sweep"

    def param_names(self, cfg):
        return ["nu", "gamma"][:cfg["unknowns"]]

    def make_data(self, cfg):
        traj = datagen.gen_burgers(cfg["nu"], cfg["gamma"], cfg["n_x"], cfg["dt"], cfg["t_final"],
                                   reference=cfg["reference"])
        U = _noisy(traj.U, cfg)
        pairs = datagen.make_shift_pairs(U, cfg["p"])
        X = np.stack([pairs.inputs, pairs.targets], axis=1)
        y = np.tile([cfg["nu"], cfg["gamma"]][:cfg["unknowns"]], (len(X), 1))
        return ({"X": X, "y": y, "train": np.arange(len(X)), "x": traj.x},
                _noise_meta(traj.U, U))

    def make_estimator(self, cfg, arrays):
        return BurgersFDEstimator(
            nu_range=cfg["nu_range"],
            gamma_range=cfg["gamma_range"] if cfg["unknowns"] == 2 else None,
            gamma=cfg["gamma"], dt=cfg["dt"], p=cfg["p"], per_sample=False,
            **_training_kwargs(cfg))


def rbf_points(cfg) -> np.ndarray:
    if cfg["points"] == "uniform":
        return rbf.RBFConfig(N_s=cfg["n_s"], N_d=cfg["n_d"]).collocation()
    rng = np.random.default_rng(cfg["points_seed"])
    pts = rng.uniform(-1.0, 1.0, size=cfg["n_d"])
    while np.any(pts <= -1.0) or len(np.unique(pts)) != pts.size:
        pts = rng.uniform(-1.0, 1.0, size=cfg["n_d"])
    return np.sort(pts)


class RBFRecovery(Experiment):
    kind = "rbf_recover"

    def param_names(self, cfg):
        return ["nu"]

    def make_data(self, cfg):
        if cfg["n_d"] < cfg["n_s"]:
            raise ConfigError("n_d must be at least n_s")
        # the compact stepper is too stiff for large nu on fine grids, so use the exact solution
        traj = datagen.gen_burgers(cfg["nu"], cfg["gamma"], cfg["n_ref"], cfg["dt"],
                                   cfg["t_final"], reference="exact")
        pts = rbf_points(cfg)
        _, clean = datagen.scatter_resample(traj.U, traj.x, cfg["n_d"], points=pts)
        vals = _noisy(clean, cfg)
        pairs = datagen.make_shift_pairs(vals, cfg["p"])
        X = np.stack([pairs.inputs, pairs.targets], axis=1)
        return ({"X": X, "y": np.full((len(X), 1), cfg["nu"]), "train": np.arange(len(X)),
                 "points": pts}, _noise_meta(clean, vals))

    def make_estimator(self, cfg, arrays):
        return BurgersRBFEstimator(
            N_s=cfg["n_s"], points=arrays["points"], nu_range=cfg["nu_range"],
            gamma=cfg["gamma"], c_range=cfg["c_range"], c_init=cfg["c_init"], dt=cfg["dt"],
            p=cfg["p"], per_sample=True, **_training_kwargs(cfg))


class RBFInverse(Experiment):
    kind = "rbf_inverse"
    inverse = True

    def param_names(self, cfg):
        return ["nu"]

    def make_data(self, cfg):
        if cfg["n_x"] < cfg["n_s"]:
            raise ConfigError("n_x must be at least n_s")
        if not 0 < cfg["n_test"] < cfg["n_nu"]:
            raise ConfigError("need 0 < n_test < n_nu")
        pts = rbf.RBFConfig(N_s=cfg["n_s"], N_d=cfg["n_x"]).collocation()
        nus = np.linspace(cfg["nu_min"], cfg["nu_max"], cfg["n_nu"])
        steps = int(round(cfg["t_final"] / cfg["dt"]))
        picks = np.linspace(0, steps - cfg["p"], cfg["n_instances"]).round().astype(int)[2:]
        inputs, targets, labels, group = [], [], [], []
        for i, nu in enumerate(nus):
            for k in picks:
                inputs.append(datagen.burgers_exact(pts, k * cfg["dt"], nu))
                targets.append(datagen.burgers_exact(pts, (k + cfg["p"]) * cfg["dt"], nu))
                labels.append(nu)
                group.append(i)
        clean = np.stack([np.array(inputs), np.array(targets)], axis=1)
        X = _noisy(clean, cfg)
        group = np.array(group)
        held = np.linspace(0, cfg["n_nu"] - 1, cfg["n_test"] + 2).round().astype(int)[1:-1]
        train = np.flatnonzero(~np.isin(group, held))
        return ({"X": X, "y": np.array(labels)[:, None], "train": train, "points": pts},
                _noise_meta(clean, X))

    def make_estimator(self, cfg, arrays):
        hi = cfg["nu_max"] * 1.25
        return BurgersRBFEstimator(
            N_s=cfg["n_s"], points=arrays["points"], nu_range=(0.0, hi), c_range=cfg["c_range"],
            dt=cfg["dt"], p=cfg["p"], per_sample=True, **_training_kwargs(cfg))


EXPERIMENTS: dict[str, Experiment] = {e.kind: e for e in (
    PoissonCase1(), PoissonCase2(), PoissonInverse1D(), PoissonInverse2D(), BurgersRecovery(),
    RBFRecovery(), RBFInverse())}


def get_experiment(kind: str) -> Experiment:
    try:
        return EXPERIMENTS[kind]
    except KeyError:
        raise ConfigError(f"unknown experiment kind {kind!r}") from None
