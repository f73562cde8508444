"""Zernike polynomials on the unit disk.

Modes are ``(n, m, parity)`` triples with ``n - m`` even and ``parity`` either
``"odd"`` (``R_nm(rho) sin(m theta)``) or ``"even"`` (``R_nm(rho) cos(m theta)``).
Ordering is by radial order ``n``, then ``m`` ascending, odd before even.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_MAX_LIMIT = 12
_FACT = np.array([float(factorial(k)) for k in range(N_MAX_LIMIT + 1)])
_DISK_TOL = 1e-12


class Mode(NamedTuple):
    n: int
    m: int
    parity: str  # "odd" | "even"


def _check_nm(n: int, m: int) -> None:
    if n < 0 or n > N_MAX_LIMIT:
        raise ValueError(f"radial order must lie in [0, {N_MAX_LIMIT}], got {n}")
    if abs(m) > n:
        raise ValueError(f"need n >= |m|, got n={n}, m={m}")


def radial(n: int, m: int, rho) -> np.ndarray:
    """Radial polynomial ``R_nm(rho)``; identically zero when ``n - m`` is odd."""
    _check_nm(n, m)
    m = abs(m)
    rho = np.asarray(rho, dtype=np.float64)
    out = np.zeros_like(rho)
    if (n - m) % 2:
        return out
    for l in range((n - m) // 2 + 1):
        coef = (-1) ** l * _FACT[n - l] / (
            _FACT[l] * _FACT[(n + m) // 2 - l] * _FACT[(n - m) // 2 - l])
        out = out + coef * rho ** (n - 2 * l)
    return out


def _polar(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rho = np.hypot(x, y)
    if np.any(rho > 1.0 + _DISK_TOL):
        raise ValueError("point lies outside the unit disk")
    return np.minimum(rho, 1.0), np.arctan2(y, x)


def _mode_polar(mode: Mode, rho, theta) -> np.ndarray:
    r = radial(mode.n, mode.m, rho)
    if mode.parity == "odd":
        return r * np.sin(mode.m * theta)
    return r * np.cos(mode.m * theta)


def evaluate_mode(n: int, m: int, parity: str, x, y) -> np.ndarray:
    if parity not in ("odd", "even"):
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    _check_nm(n, m)
    rho, theta = _polar(x, y)
    return _mode_polar(Mode(n, abs(m), parity), rho, theta)


def normalization(n: int, m: int) -> float:
    """Factor turning the inner product ``<f, Z_nm>`` into the coefficient of ``Z_nm``.

    ``<Z_nm, Z_nm> = pi / (n + 1)`` for ``m = 0`` and ``pi / (2 (n + 1))`` otherwise.
    """
    return (n + 1) / np.pi * (1.0 if m == 0 else 2.0)


class ZernikeBasis:
    """All admissible modes up to radial order ``N_max``.

    Parameters
    ----------
    N_max : int
        Highest radial order, at most 12.
    modes : sequence of (n, m, parity), optional
        Explicit subset, kept in the given order.
    """

    def __init__(self, N_max: int | None = None, modes=None):
        if modes is None:
            if N_max is None:
                raise ValueError("give N_max or an explicit mode list")
            if not 0 <= N_max <= N_MAX_LIMIT:
                raise ValueError(f"N_max must lie in [0, {N_MAX_LIMIT}], got {N_max}")
            modes = []
            for n in range(N_max + 1):
                for m in range(n % 2, n + 1, 2):
                    if m > 0:
                        modes.append(Mode(n, m, "odd"))
                    modes.append(Mode(n, m, "even"))
        else:
            modes = [Mode(int(n), int(m), p) for n, m, p in modes]
            for md in modes:
                _check_nm(md.n, md.m)
                if md.m < 0 or (md.n - md.m) % 2:
                    raise ValueError(f"mode {md} has n - m odd or negative m")
                if md.parity not in ("odd", "even"):
                    raise ValueError(f"mode {md} has an unknown parity")
                if md.parity == "odd" and md.m == 0:
                    raise ValueError("odd modes need m >= 1")
            if len(set(modes)) != len(modes):
                raise ValueError("duplicate modes")
        self.modes: list[Mode] = list(modes)
        self.N_max = max(md.n for md in self.modes) if self.modes else 0

    def __len__(self) -> int:
        return len(self.modes)

    def index(self, n: int, m: int, parity: str) -> int:
        return self.modes.index(Mode(n, m, parity))

    def matrix(self, x, y) -> np.ndarray:
        """Design matrix ``(n_points, n_modes)`` at Cartesian points."""
        rho, theta = _polar(np.ravel(x), np.ravel(y))
        return self._matrix_polar(rho, theta)

    def _matrix_polar(self, rho, theta) -> np.ndarray:
        return np.stack([_mode_polar(md, rho, theta) for md in self.modes], axis=-1)

    def norms(self) -> np.ndarray:
        return np.array([normalization(md.n, md.m) for md in self.modes])


@dataclass
class ZernikeCoefficients:
    """Coefficients aligned with ``basis.modes``; odd entries are ``A_nm``, even ``B_nm``."""

    basis: ZernikeBasis
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[-1] != len(self.basis):
            raise ValueError(f"{self.values.shape[-1]} coefficients for {len(self.basis)} modes")

    def _pick(self, parity: str) -> dict:
        return {(md.n, md.m): self.values[..., k]
                for k, md in enumerate(self.basis.modes) if md.parity == parity}

    @property
    def A(self) -> dict:
        return self._pick("odd")

    @property
    def B(self) -> dict:
        return self._pick("even")


def reconstruct_field(coeffs, basis: ZernikeBasis, x, y) -> Tensor:
    """Field values ``sum_k c_k Z_k`` at the points; ``coeffs`` is ``(K,)`` or ``(batch, K)``."""
    if isinstance(coeffs, ZernikeCoefficients):
        coeffs = coeffs.values
    c = ad.as_tensor(coeffs)
    if c.shape[-1] != len(basis):
        raise ad.ShapeError(f"{c.shape[-1]} coefficients for {len(basis)} modes")
    Z = basis.matrix(x, y)
    if c.ndim == 1:
        return (c.reshape((1, -1)) @ Z.T).reshape((Z.shape[0],))
    return c @ Z.T


def polar_quadrature(n_rho: int = 400, n_theta: int = 400, rule: str = "gauss"):
    """Nodes and weights for integrals over the unit disk.

    ``rule="gauss"`` uses Gauss-Legendre in ``rho`` (exact for the radial
    polynomials up to degree ``2 n_rho - 2``); ``rule="midpoint"`` uses the
    midpoint rule. The angle is always sampled uniformly, which is exact for
    trigonometric polynomials of degree below ``n_theta``. Weights include the
    Jacobian ``rho``.

    Returns
    -------
    rho, theta, weights : ndarray
        Flattened arrays of length ``n_rho * n_theta``.
    """
    if n_rho < 1 or n_theta < 1:
        raise ValueError("quadrature resolutions must be positive")
    if rule == "gauss":
        t, w = np.polynomial.legendre.leggauss(n_rho)
        r, wr = 0.5 * (t + 1.0), 0.5 * w
    elif rule == "midpoint":
        r = (np.arange(n_rho) + 0.5) / n_rho
        wr = np.full(n_rho, 1.0 / n_rho)
    else:
        raise ValueError(f"unknown quadrature rule '{rule}'")
    th = (np.arange(n_theta) + 0.5) * (2.0 * np.pi / n_theta)
    R, TH = np.meshgrid(r, th, indexing="ij")
    W = np.outer(wr * r, np.full(n_theta, 2.0 * np.pi / n_theta))
    return R.ravel(), TH.ravel(), W.ravel()


def project_moments(values, basis: ZernikeBasis, quadrature=None) -> ZernikeCoefficients:
    """Zernike moments of a field sampled at the nodes of ``quadrature``.

    ``values`` may also be a callable ``f(x, y)``.
    """
    rho, theta, w = polar_quadrature() if quadrature is None else quadrature
    if callable(values):
        values = values(rho * np.cos(theta), rho * np.sin(theta))
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != rho.size:
        raise ValueError(f"{values.shape[-1]} samples for {rho.size} quadrature nodes")
    Z = basis._matrix_polar(rho, theta)
    return ZernikeCoefficients(basis, basis.norms() * ((values * w) @ Z))
