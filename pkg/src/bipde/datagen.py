"""Synthetic datasets: Burgers trajectories, Poisson ensembles, noise and resampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import burgers_fd, container, poisson

NU_DEFAULT = 0.01 / np.pi


# ----------------------------------------------------------------------------
# Burgers

def burgers_exact(x, t: float, nu: float, gamma: float = 1.0,
                  nz: int = 1601, zmax: float = 12.0) -> np.ndarray:
    """Exact solution for ``u(x, 0) = -sin(pi x)`` via the Cole-Hopf transform.

    The heat-kernel convolution is written in the scaled variable
    ``z = (x - y) / sqrt(4 nu t)`` and integrated with the trapezoid rule on
    ``[-zmax, zmax]``; exponents are shifted by their maximum before
    exponentiation so small ``nu`` does not overflow. ``gamma`` rescales the
    convection term (``u_t + gamma u u_x = nu u_xx``).
    """
    x = np.asarray(x, dtype=np.float64)
    if nu <= 0:
        raise ValueError("nu must be positive")
    if t == 0:
        return -np.sin(np.pi * x)
    z = np.linspace(-zmax, zmax, nz)
    y = x.reshape(-1, 1) - np.sqrt(4.0 * nu * t) * z
    expo = -gamma * np.cos(np.pi * y) / (2.0 * np.pi * nu) - z ** 2
    w = np.exp(expo - expo.max(axis=1, keepdims=True))
    w[:, [0, -1]] *= 0.5
    u = -(np.sin(np.pi * y) * w).sum(axis=1) / w.sum(axis=1)
    return u.reshape(x.shape)


@dataclass
class Trajectory:
    """Snapshots as rows: ``U[k]`` is the state at ``t[k]``."""

    x: np.ndarray
    t: np.ndarray
    U: np.ndarray
    meta: dict = field(default_factory=dict)


def gen_burgers(nu: float = NU_DEFAULT, gamma: float = 1.0, N_x: int = 640, dt: float = 1e-3,
                t_final: float = 0.2, x_L: float = -1.0, x_R: float = 1.0,
                reference: str = "solver") -> Trajectory:
    """Burgers trajectory from ``u(x, 0) = -sin(pi x)`` with ``M = t_final / dt + 1`` snapshots.

    ``reference="solver"`` rolls the compact finite-difference stepper forward;
    ``reference="exact"`` samples the Cole-Hopf solution at the same nodes and
    times (only for the default domain ``[-1, 1]``).
    """
    steps = int(round(t_final / dt))
    if steps < 0 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    x = np.linspace(x_L, x_R, N_x)
    t = dt * np.arange(steps + 1)
    if reference == "solver":
        op = burgers_fd.build_cfd6(N_x, x[1] - x[0])
        U = burgers_fd.roll_forward(burgers_fd.initial_condition(x), steps, op, nu, gamma, dt).data
    elif reference == "exact":
        if (x_L, x_R) != (-1.0, 1.0):
            raise ValueError("the exact reference is only available on [-1, 1]")
        U = np.stack([burgers_exact(x, tk, nu, gamma) for tk in t])
        U[:, [0, -1]] = 0.0
    else:
        raise ValueError(f"unknown reference '{reference}'")
    meta = {"kind": "burgers", "nu": float(nu), "gamma": float(gamma), "N_x": int(N_x),
            "dt": float(dt), "t_final": float(t_final), "x_L": float(x_L), "x_R": float(x_R),
            "reference": reference}
    return Trajectory(x=x, t=t, U=U, meta=meta)


@dataclass
class ShiftDataset:
    """Input snapshots and the snapshots ``p`` steps later, row by row."""

    inputs: np.ndarray
    targets: np.ndarray
    p: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def make_shift_pairs(trajectory, p: int) -> ShiftDataset:
    """Pair snapshot ``k`` with snapshot ``k + p`` for ``k = 0 .. M - p - 1``."""
    if isinstance(trajectory, Trajectory):
        U, meta = trajectory.U, dict(trajectory.meta)
    else:
        U, meta = np.asarray(trajectory, dtype=np.float64), {}
    M = U.shape[0]
    if not 0 <= p < M:
        raise ValueError(f"shift p={p} must satisfy 0 <= p < M={M}")
    meta["p"] = int(p)
    return ShiftDataset(inputs=U[:M - p].copy(), targets=U[p:].copy(), p=p, meta=meta)


def gen_burgers_family(nu_values, N_x: int = 160, dt: float = 5e-4, t_final: float = 0.2,
                       n_instances: int = 10, discard: int = 2, p: int = 1,
                       reference: str = "solver") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift pairs from several viscosities, sampled at ``n_instances`` times.

    Each trajectory is sampled at ``n_instances`` equally spaced snapshot
    indices; the first ``discard`` are dropped and each remaining one is paired
    with the snapshot ``p`` steps later.

    Returns
    -------
    inputs, targets : ndarray, shape (n_pairs, N_x)
    nus : ndarray, shape (n_pairs,)
    """
    inputs, targets, nus = [], [], []
    for nu in np.atleast_1d(nu_values):
        traj = gen_burgers(float(nu), 1.0, N_x, dt, t_final, reference=reference)
        last = traj.U.shape[0] - 1 - p
        picks = np.linspace(0, last, n_instances).round().astype(int)[discard:]
        inputs.append(traj.U[picks])
        targets.append(traj.U[picks + p])
        nus.append(np.full(picks.size, float(nu)))
    return np.concatenate(inputs), np.concatenate(targets), np.concatenate(nus)


# ----------------------------------------------------------------------------
# noise and resampling

def add_noise(data, std: float, rng_seed: int | None = 0) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise; ``std = 0`` returns an unchanged copy."""
    if std < 0:
        raise ValueError("noise std must be non-negative")
    data = np.asarray(data, dtype=np.float64)
    if std == 0:
        return data.copy()
    rng = np.random.default_rng(rng_seed)
    return data + rng.normal(0.0, std, size=data.shape)


def noise_report(clean, noisy) -> dict:
    """Absolute noise std and its size relative to the RMS of the clean data."""
    clean = np.asarray(clean)
    diff = np.asarray(noisy) - clean
    rms = float(np.sqrt(np.mean(clean ** 2)))
    std = float(diff.std())
    return {"noise_std": std, "noise_rms_relative": std / rms if rms > 0 else float("inf")}


def scatter_resample(values, x_grid, n_points: int, rng_seed: int | None = 0,
                     points=None) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of grid data onto random interior points.

    ``values`` is ``(N,)`` or ``(n_rows, N)``; each row is resampled at the
    same sorted points, drawn uniformly from the open interval unless
    ``points`` is given.
    """
    x_grid = np.asarray(x_grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if points is None:
        if n_points < 2:
            raise ValueError("need at least 2 points")
        rng = np.random.default_rng(rng_seed)
        lo, hi = x_grid[0], x_grid[-1]
        points = rng.uniform(lo, hi, size=n_points)
        while np.any(points <= lo) or len(np.unique(points)) != n_points:
            points = rng.uniform(lo, hi, size=n_points)
    points = np.sort(np.asarray(points, dtype=np.float64))
    rows = np.atleast_2d(values)
    out = np.stack([np.interp(points, x_grid, row) for row in rows])
    return points, out.reshape(values.shape[:-1] + (points.size,))


# ----------------------------------------------------------------------------
# Poisson ensembles

def diffusion_1d(a, x) -> np.ndarray:
    """``D(x) = 1 + a0 + a1 x`` for coefficient rows ``a`` of shape ``(..., 2)``."""
    a = np.asarray(a, dtype=np.float64)
    return 1.0 + a[..., :1] + a[..., 1:2] * np.asarray(x)


def diffusion_2d(a, X, Y) -> np.ndarray:
    """``D = 4 + 2 a0 y + sqrt(3) a1 (2x^2 + 2y^2 - 1)`` for rows ``a`` of shape ``(..., 2)``."""
    a = np.asarray(a, dtype=np.float64)[..., None, None]
    return 4.0 + 2.0 * a[..., 0, :, :] * Y + np.sqrt(3.0) * a[..., 1, :, :] * (2 * X ** 2 + 2 * Y ** 2 - 1)


@dataclass
class PoissonEnsemble:
    fields: np.ndarray
    coeffs: np.ndarray
    grid: object
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.fields.shape[0]


POISSON_1D = {"x_lo": -1.0, "x_hi": 1.0, "N": 160, "u_bc": 0.2}
POISSON_2D = {"half_width": 1.0 / np.sqrt(2.0), "N": 30}


def poisson_1d_grid(N: int = 160) -> poisson.Grid1D:
    return poisson.Grid1D(POISSON_1D["x_lo"], POISSON_1D["x_hi"], N)


def poisson_2d_grid(N: int = 30) -> poisson.Grid2D:
    return poisson.Grid2D.square(POISSON_2D["half_width"], N)


def poisson_2d_data(grid: poisson.Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Source ``x + y`` and boundary data ``cos(pi x) cos(pi y)``."""
    X, Y = grid.mesh()
    return X + Y, np.cos(np.pi * X) * np.cos(np.pi * Y)


def solve_poisson_1d(a, grid: poisson.Grid1D) -> np.ndarray:
    D = diffusion_1d(a, grid.x)
    u_bc = POISSON_1D["u_bc"]
    return poisson.solve_1d(D, np.sin(np.pi * grid.x), u_bc, u_bc, grid).data


def solve_poisson_2d(a, grid: poisson.Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    f, u_bc = poisson_2d_data(grid)
    D = diffusion_2d(a, X, Y)
    return poisson.solve_2d(poisson.PoissonProblem(grid, D, f, u_bc), full=True).data


def _sample_coeffs(n_samples: int, n_coeffs: int, a_range, rng_seed: int, positive) -> np.ndarray:
    lo, hi = a_range
    if not lo < hi:
        raise ValueError("coefficient range is inverted")
    coeffs = np.empty((n_samples, n_coeffs))
    for i in range(n_samples):
        rng = np.random.default_rng([rng_seed, i])
        for _ in range(1000):
            a = rng.uniform(lo, hi, size=n_coeffs)
            if positive(a):
                break
        else:
            raise ValueError("could not draw a coefficient vector with positive D")
        coeffs[i] = a
    return coeffs


def gen_poisson_ensemble(dim: int = 1, n_samples: int = 1000, rng_seed: int = 0,
                         a_range=(0.25, 0.75), N: int | None = None) -> PoissonEnsemble:
    """Forward solves for random hidden coefficients drawn uniformly from ``a_range``.

    ``dim=1``: ``D = 1 + a0 + a1 x`` on ``[-1, 1]``, source ``sin(pi x)``,
    boundary value 0.2, 160 nodes by default. ``dim=2``:
    ``D = 4 + 2 a0 y + sqrt(3) a1 (2x^2 + 2y^2 - 1)`` on the square inscribed in
    the unit disk, source ``x + y``, boundary data ``cos(pi x) cos(pi y)``,
    30 x 30 nodes by default. Coefficient draws with non-positive ``D`` are
    redrawn.
    """
    if dim == 1:
        grid = poisson_1d_grid(N or POISSON_1D["N"])
        coeffs = _sample_coeffs(n_samples, 2, a_range, rng_seed,
                                lambda a: np.all(diffusion_1d(a, grid.x) > 0))
        fields = solve_poisson_1d(coeffs, grid) if n_samples else np.empty((0, grid.N))
        gmeta = {"x_lo": grid.x_lo, "x_hi": grid.x_hi, "N": grid.N}
    elif dim == 2:
        grid = poisson_2d_grid(N or POISSON_2D["N"])
        X, Y = grid.mesh()
        coeffs = _sample_coeffs(n_samples, 2, a_range, rng_seed,
                                lambda a: np.all(diffusion_2d(a, X, Y) > 0))
        fields = solve_poisson_2d(coeffs, grid) if n_samples else np.empty((0,) + grid.shape)
        gmeta = {"half_width": grid.x_hi, "N": grid.N_x}
    else:
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    meta = {"kind": f"poisson{dim}d", "n_samples": int(n_samples), "seed": int(rng_seed),
            "a_range": [float(a_range[0]), float(a_range[1])], "grid": gmeta}
    return PoissonEnsemble(fields=fields, coeffs=coeffs, grid=grid, meta=meta)


# ----------------------------------------------------------------------------
# dataset files

def save_dataset(path, arrays: dict, meta: dict):
    return container.write(path, container.DATASET_MAGIC, arrays, meta)


def load_dataset(path) -> tuple[dict, dict]:
    return container.read(path, container.DATASET_MAGIC)
