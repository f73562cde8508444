"""Differentiable 1-D Burgers stepper.

Space: tridiagonal sixth-order compact first derivative with one-sided
closures on the two outermost nodes at each end. Second derivatives apply the
first-derivative operator twice. Time: three-stage TVD Runge-Kutta.

Snapshots are stored as rows, so a batch of states is an array of shape
``(n_states, N)`` and derivatives are ``U @ D1.T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ALPHA = 1.0 / 3.0
BLOWUP_LIMIT = 1e3


class BlowUpError(FloatingPointError):
    """The state left the admissible range during time stepping."""


@dataclass(frozen=True)
class CFD6Operator:
    """Compact derivative operator on ``N`` uniformly spaced nodes.

    ``B @ U' = A @ U``; ``D1 = B^{-1} A`` is precomputed because both matrices
    are constant.
    """

    N: int
    h: float
    A: np.ndarray
    B: np.ndarray
    D1: np.ndarray

    def derivative(self, U: np.ndarray) -> np.ndarray:
        return np.asarray(U) @ self.D1.T


def build_cfd6(N: int, h: float) -> CFD6Operator:
    if N < 8:
        raise ValueError(f"CFD6 closures need at least 8 nodes, got {N}")
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    a = 2.0 / 3.0 * (ALPHA + 2.0)
    b = 1.0 / 3.0 * (4.0 * ALPHA - 1.0)

    B = np.zeros((N, N))
    A = np.zeros((N, N))
    for i in range(2, N - 2):
        B[i, i - 1:i + 2] = (ALPHA, 1.0, ALPHA)
        A[i, i - 2:i + 3] = (-b / 4.0, -a / 2.0, 0.0, a / 2.0, b / 4.0)

    # one-sided closures
    B[0, :2] = (1.0, 5.0)
    A[0, :6] = (-197 / 60, -5 / 12, 5.0, -5 / 3, 5 / 12, -1 / 20)
    B[1, :3] = (2 / 11, 1.0, 2 / 11)
    A[1, :6] = (-20 / 33, -35 / 132, 34 / 33, -7 / 33, 2 / 33, -1 / 132)
    B[N - 2, N - 3:] = (2 / 11, 1.0, 2 / 11)
    A[N - 2, N - 6:] = (1 / 132, -2 / 33, 7 / 33, -34 / 33, 35 / 132, 20 / 33)
    B[N - 1, N - 2:] = (5.0, 1.0)
    A[N - 1, N - 6:] = (1 / 20, -5 / 12, 5 / 3, -5.0, 5 / 12, 197 / 60)

    A /= h
    D1 = np.linalg.solve(B, A)
    for M in (A, B, D1):
        M.setflags(write=False)
    return CFD6Operator(N=N, h=h, A=A, B=B, D1=D1)


def _per_row(param, shape: tuple[int, ...]):
    """Expand a scalar or per-row parameter so it multiplies a ``shape`` array."""
    if not isinstance(param, Tensor):
        param = np.asarray(param, dtype=np.float64)
        if param.size == 1:
            return float(param.reshape(-1)[0])
        return np.broadcast_to(param.reshape(param.shape + (1,)), shape)
    if param.size == 1:
        return param
    if len(shape) < 2 or param.size != shape[0]:
        raise ad.ShapeError(f"parameter of size {param.size} does not match {shape}")
    return ad.broadcast_to(param.reshape((shape[0], 1)), shape)


def apply_L(U, op: CFD6Operator, nu, gamma=1.0) -> Tensor:
    """``nu * U'' - gamma * U * U'`` with ``U''`` from two applications of ``D1``."""
    U = ad.as_tensor(U)
    if U.shape[-1] != op.N:
        raise ad.ShapeError(f"state has {U.shape[-1]} nodes, operator has {op.N}")
    flat = U.reshape((-1, op.N)) if U.ndim != 2 else U
    D1t = op.D1.T
    Ux = flat @ D1t
    Uxx = Ux @ D1t
    out = _per_row(nu, flat.shape) * Uxx - _per_row(gamma, flat.shape) * (flat * Ux)
    return out.reshape(U.shape) if U.ndim != 2 else out


def _pin(U: Tensor, mask: np.ndarray | None) -> Tensor:
    return U if mask is None else U * np.broadcast_to(mask, U.shape)


def tvd_rk3_step(U, rhs: Callable[[Tensor], Tensor], dt: float, pin_ends: bool = True) -> Tensor:
    """Advance ``dU/dt = rhs(U)`` one step with the three-stage TVD scheme.

    With ``pin_ends`` the first and last node are reset to zero after every
    stage (homogeneous Dirichlet data).
    """
    U = ad.as_tensor(U)
    mask = None
    if pin_ends:
        mask = np.ones(U.shape[-1])
        mask[[0, -1]] = 0.0
    U1 = _pin(U + dt * rhs(U), mask)
    U2 = _pin(0.75 * U + 0.25 * U1 + (0.25 * dt) * rhs(U1), mask)
    out = _pin(U / 3.0 + (2.0 / 3.0) * U2 + (2.0 / 3.0 * dt) * rhs(U2), mask)
    if np.abs(out.data).max(initial=0.0) > BLOWUP_LIMIT:
        raise BlowUpError(f"|U| exceeded {BLOWUP_LIMIT:g}; reduce the time step")
    return out


def burgers_step(U, op: CFD6Operator, nu, gamma, dt: float) -> Tensor:
    return tvd_rk3_step(U, lambda V: apply_L(V, op, nu, gamma), dt)


def roll_forward(U0, steps: int, op: CFD6Operator, nu, gamma, dt: float) -> Tensor:
    """Trajectory ``(steps + 1, N)`` starting from ``U0``; differentiable in ``nu``, ``gamma``."""
    U = ad.as_tensor(U0)
    states = [U]
    for _ in range(steps):
        U = burgers_step(U, op, nu, gamma, dt)
        states.append(U)
    return ad.stack(states)


def initial_condition(x: np.ndarray) -> np.ndarray:
    return -np.sin(np.pi * np.asarray(x))
