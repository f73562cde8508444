"""Meshless Burgers stepper with multiquadric radial basis functions.

A field is ``u(x) = sum_j lam_j phi_j(x)`` with ``phi_j = sqrt((x - x_j)^2 + c_j^2)``
plus the affine tail that makes ``u(x_L) = u(x_R) = 0``; that tail is
eliminated algebraically, so only the ``N_s`` coefficients ``lam_j`` remain.
Time stepping uses the linearised Crank-Nicolson scheme of Xie and Li,
solved on ``N_d >= N_s`` collocation points by least squares.

Seeds and shape parameters are tensors, so every matrix (and everything built
on it) is differentiable with respect to them. Leading batch axes are allowed
on seeds, shapes, coefficients and parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class RBFConfig:
    """Discretization settings.

    ``N_s`` is the number of basis functions (seeds), ``N_d`` the number of
    collocation points. Collocation points default to ``N_d`` uniformly spaced
    interior points of ``(x_L, x_R)``.
    """

    N_s: int = 20
    N_d: int = 80
    x_L: float = -1.0
    x_R: float = 1.0
    dt: float = 1e-3
    c_min: float = 0.01
    c_max: float = 1.0
    nu_min: float = 0.0
    nu_max: float = 0.1
    gamma_min: float | None = None
    gamma_max: float | None = None

    def __post_init__(self):
        if not self.x_R > self.x_L:
            raise ValueError("x_R must exceed x_L")
        if self.N_s < 1 or self.N_d < self.N_s:
            raise ValueError(f"need 1 <= N_s <= N_d, got N_s={self.N_s}, N_d={self.N_d}")
        if not 0.0 < self.c_min < self.c_max:
            raise ValueError("shape bounds need 0 < c_min < c_max")
        if not self.nu_min < self.nu_max:
            raise ValueError("nu range is inverted")
        if (self.gamma_min is None) != (self.gamma_max is None):
            raise ValueError("give both gamma bounds or neither")
        if self.gamma_min is not None and not self.gamma_min < self.gamma_max:
            raise ValueError("gamma range is inverted")

    @property
    def n_bottleneck(self) -> int:
        return 2 * self.N_s + 1 + (self.gamma_min is not None)

    def collocation(self) -> np.ndarray:
        j = np.arange(self.N_d)
        return self.x_L + (self.x_R - self.x_L) * (1.0 + j) / (self.N_d + 1.0)


@dataclass
class RBFMatrices:
    """``A``, ``A_x``, ``A_xx`` of shape ``(..., N_d, N_s)`` and the points they live on."""

    A: Tensor
    A_x: Tensor
    A_xx: Tensor
    points: np.ndarray

    def evaluate(self, lam) -> Tensor:
        return _apply(self.A, lam)


def mq_phi(x, seeds, shapes) -> tuple[Tensor, Tensor, Tensor]:
    """Multiquadric values and first two derivatives, shape ``(..., len(x), K)``."""
    x = np.asarray(x, dtype=np.float64)
    seeds, shapes = ad.as_tensor(seeds), ad.as_tensor(shapes)
    if seeds.shape != shapes.shape:
        raise ad.ShapeError(f"seeds {seeds.shape} and shapes {shapes.shape} differ")
    if np.any(shapes.data <= 0.0):
        raise ValueError("shape parameters must be positive")
    lead, K = seeds.shape[:-1], seeds.shape[-1]
    full = lead + (x.size, K)
    xs = ad.broadcast_to(seeds.reshape(lead + (1, K)), full)
    cs = ad.broadcast_to(shapes.reshape(lead + (1, K)), full)
    r = np.broadcast_to(x.reshape(-1, 1), full) - xs
    c2 = ad.square(cs)
    phi = ad.sqrt(ad.square(r) + c2)
    return phi, r / phi, c2 / (phi * ad.square(phi))


def build_matrices(cfg: RBFConfig, seeds, shapes, points=None) -> RBFMatrices:
    """Collocation matrices with the homogeneous boundary data injected."""
    pts = cfg.collocation() if points is None else np.asarray(points, dtype=np.float64)
    seeds = ad.as_tensor(seeds)
    if seeds.shape[-1] != cfg.N_s:
        raise ad.ShapeError(f"{seeds.shape[-1]} seeds for N_s = {cfg.N_s}")
    phi, dphi, d2phi = mq_phi(pts, seeds, shapes)
    ends, _, _ = mq_phi(np.array([cfg.x_L, cfg.x_R]), seeds, shapes)
    width = cfg.x_R - cfg.x_L
    full = phi.shape
    phi_L = ad.broadcast_to(ends[..., :1, :], full)
    slope = ad.broadcast_to((ends[..., 1:, :] - ends[..., :1, :]) / width, full)
    dx = np.broadcast_to((pts - cfg.x_L).reshape(-1, 1), full)
    A = phi - phi_L - slope * dx
    return RBFMatrices(A=A, A_x=dphi - slope, A_xx=d2phi, points=pts)


def _apply(M: Tensor, lam) -> Tensor:
    """``M @ lam`` for ``lam`` of shape ``(..., K)``; a 2-D ``M`` is shared by the batch."""
    lam = ad.as_tensor(lam)
    if lam.ndim == 1 and M.ndim == 2:
        return (M @ lam.reshape((-1, 1))).reshape((M.shape[0],))
    lead = lam.shape[:-1]
    Mb = _batched(M, lead)
    return (Mb @ lam.reshape(lead + (lam.shape[-1], 1))).reshape(lead + (M.shape[-2],))


def _batched(M: Tensor, lead: tuple[int, ...]) -> Tensor:
    if M.shape[:-2] == lead:
        return M
    if M.ndim != 2:
        raise ad.ShapeError(f"matrix batch {M.shape[:-2]} does not match {lead}")
    return ad.broadcast_to(M, lead + M.shape)


def _expand(param, lead: tuple[int, ...], tail: tuple[int, ...]):
    """Scalar or per-sample ``(...,)`` parameter broadcast to ``lead + tail``."""
    if not isinstance(param, Tensor):
        arr = np.asarray(param, dtype=np.float64)
        if arr.size == 1:
            return float(arr.reshape(-1)[0])
        param = ad.Tensor(arr)
    if param.size == 1:
        return param.reshape(())
    if param.shape != lead:
        raise ad.ShapeError(f"parameter of shape {param.shape} for batch {lead}")
    return ad.broadcast_to(param.reshape(lead + (1,) * len(tail)), lead + tail)


def fit_initial(U0, mats: RBFMatrices) -> Tensor:
    """Least-squares coefficients of the samples ``U0`` (shape ``(..., N_d)``)."""
    U0 = ad.as_tensor(U0)
    if U0.shape[-1] != mats.A.shape[-2]:
        raise ad.ShapeError(f"{U0.shape[-1]} samples for {mats.A.shape[-2]} collocation points")
    return ad.lstsq_solve(_batched(mats.A, U0.shape[:-1]), U0)


def rbf_step(lam, mats: RBFMatrices, nu, gamma, dt: float) -> Tensor:
    """One implicit step; ``gamma`` scales the whole linearised convection term."""
    lam = ad.as_tensor(lam)
    lead = lam.shape[:-1]
    A, Ax, Axx = (_batched(M, lead) for M in (mats.A, mats.A_x, mats.A_xx))
    P, K = A.shape[-2:]
    g = _apply(A, lam) * (0.5 * dt)
    gx = _apply(Ax, lam) * (0.5 * dt)
    gam = _expand(gamma, lead, (P,))
    g, gx = g * gam, gx * gam
    half_nu = _expand(nu, lead, (P, K)) * (0.5 * dt)
    col = lead + (P, K)
    lhs = (A + ad.broadcast_to(gx.reshape(lead + (P, 1)), col) * A
           + ad.broadcast_to(g.reshape(lead + (P, 1)), col) * Ax - half_nu * Axx)
    rhs = _apply(A + half_nu * Axx, lam)
    return ad.lstsq_solve(lhs, rhs)


def rbf_rollout(U0, p: int, mats: RBFMatrices, nu, gamma, dt: float) -> Tensor:
    """Fit ``U0``, take ``p`` steps and return the field at the collocation points."""
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    lam = fit_initial(U0, mats)
    for _ in range(p):
        lam = rbf_step(lam, mats, nu, gamma, dt)
    return _apply(mats.A, lam)


def bottleneck_to_config(raw, cfg: RBFConfig):
    """Map sigmoid outputs in ``(0, 1)`` to ``(seeds, shapes, nu[, gamma])``.

    The first ``ceil(N_s / 2)`` seed outputs are mirrored to the left half of
    the domain, the rest go to the right half. Shapes and parameters are affine
    maps onto their bounds.
    """
    raw = ad.as_tensor(raw)
    if raw.shape[-1] != cfg.n_bottleneck:
        raise ad.ShapeError(f"bottleneck has {raw.shape[-1]} outputs, expected {cfg.n_bottleneck}")
    if np.any(raw.data < 0.0) or np.any(raw.data > 1.0):
        raise ValueError("bottleneck outputs must lie in [0, 1]")
    n = cfg.N_s
    k = -(-n // 2)
    mid = 0.5 * (cfg.x_L + cfg.x_R)
    scale = np.concatenate([np.full(k, -(mid - cfg.x_L)), np.full(n - k, cfg.x_R - mid)])
    lead = raw.shape[:-1]
    seeds = mid + raw[..., :n] * np.broadcast_to(scale, lead + (n,))
    shapes = cfg.c_min + (cfg.c_max - cfg.c_min) * raw[..., n:2 * n]
    nu = cfg.nu_min + (cfg.nu_max - cfg.nu_min) * raw[..., 2 * n]
    if cfg.gamma_min is None:
        return seeds, shapes, nu
    gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * raw[..., 2 * n + 1]
    return seeds, shapes, nu, gamma


def config_to_bottleneck(cfg: RBFConfig, seeds, shapes, nu, gamma=None) -> np.ndarray:
    """Inverse of :func:`bottleneck_to_config` for initialising raw values."""
    n = cfg.N_s
    k = -(-n // 2)
    mid = 0.5 * (cfg.x_L + cfg.x_R)
    seeds = np.asarray(seeds, dtype=np.float64)
    scale = np.concatenate([np.full(k, -(mid - cfg.x_L)), np.full(n - k, cfg.x_R - mid)])
    parts = [(seeds - mid) / scale,
             (np.asarray(shapes, dtype=np.float64) - cfg.c_min) / (cfg.c_max - cfg.c_min),
             [(nu - cfg.nu_min) / (cfg.nu_max - cfg.nu_min)]]
    if cfg.gamma_min is not None:
        parts.append([(gamma - cfg.gamma_min) / (cfg.gamma_max - cfg.gamma_min)])
    out = np.concatenate([np.ravel(p) for p in parts])
    if np.any(out <= 0.0) or np.any(out >= 1.0):
        raise ValueError("configuration lies outside the bottleneck ranges")
    return out


def default_seeds(cfg: RBFConfig) -> np.ndarray:
    """Seeds matching the left/right split of :func:`bottleneck_to_config`.

    Left seeds are listed from the middle outwards, so the array is not sorted.
    """
    n = cfg.N_s
    k = -(-n // 2)
    mid = 0.5 * (cfg.x_L + cfg.x_R)
    left = mid - (mid - cfg.x_L) * (np.arange(k) + 0.5) / k
    right = mid + (cfg.x_R - mid) * (np.arange(n - k) + 0.5) / max(n - k, 1)
    return np.concatenate([left, right])
