"""Variable-coefficient Poisson solver layer with Dirichlet data.

Solves ``div(D grad u) + f = 0`` with second-order finite differences. ``D``
lives at nodes; face values are arithmetic means of the two neighbouring
nodes. Assembly and the dense solve are on the autodiff tape, so gradients of
any loss of ``u`` flow back to ``D``.

2-D fields are stored as ``(N_y, N_x)`` arrays indexed ``[j, i]`` (``x`` along
the last axis); interior unknowns are ordered row-major. A leading batch axis
is allowed on ``D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class Grid1D:
    x_lo: float
    x_hi: float
    N: int

    def __post_init__(self):
        if self.N < 3:
            raise ValueError(f"need at least 3 nodes, got {self.N}")
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.N - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.N)


@dataclass(frozen=True)
class Grid2D:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    N_x: int
    N_y: int

    def __post_init__(self):
        if self.N_x < 3 or self.N_y < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.N_x}x{self.N_y}")
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise ValueError("grid extents must be increasing")

    @classmethod
    def square(cls, half_width: float = 1.0 / np.sqrt(2.0), n: int = 32) -> "Grid2D":
        return cls(-half_width, half_width, -half_width, half_width, n, n)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.N_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_hi - self.y_lo) / (self.N_y - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N_y, self.N_x)

    @property
    def n_interior(self) -> int:
        return (self.N_x - 2) * (self.N_y - 2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``X, Y`` of shape ``(N_y, N_x)``."""
        return np.meshgrid(np.linspace(self.x_lo, self.x_hi, self.N_x),
                           np.linspace(self.y_lo, self.y_hi, self.N_y))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1], :] = True
        mask[:, [0, -1]] = True
        return mask


@dataclass
class PoissonProblem:
    """``D`` is ``(N_y, N_x)`` or ``(batch, N_y, N_x)``; ``f`` and ``u_bc`` are grid arrays.

    Only the boundary entries of ``u_bc`` are read.
    """

    grid: Grid2D
    D: Tensor
    f: np.ndarray
    u_bc: np.ndarray = field(default=None)

    def __post_init__(self):
        self.D = ad.as_tensor(self.D)
        self.f = np.broadcast_to(np.asarray(self.f, dtype=np.float64), self.grid.shape)
        u_bc = 0.0 if self.u_bc is None else self.u_bc
        self.u_bc = np.broadcast_to(np.asarray(u_bc, dtype=np.float64), self.grid.shape)
        if self.D.shape[-2:] != self.grid.shape:
            raise ad.ShapeError(f"D has shape {self.D.shape}, grid is {self.grid.shape}")
        _check_positive(self.D)


def _check_positive(D: Tensor) -> None:
    if np.any(D.data <= 0.0):
        raise ValueError(f"diffusion coefficient must be positive (min {D.data.min():.3g})")


def _stencil_layout(ny: int, nx: int):
    """Scatter rows/cols for the 5-point stencil on an ``ny x nx`` interior block.

    Returns the index arrays and, per direction, the interior nodes that have
    an interior neighbour on that side.
    """
    idx = np.arange(ny * nx).reshape(ny, nx)
    sides = {
        "W": (np.s_[:, 1:], -1),
        "E": (np.s_[:, :-1], 1),
        "S": (np.s_[1:, :], -nx),
        "N": (np.s_[:-1, :], nx),
    }
    rows, cols, picks = [idx.ravel()], [idx.ravel()], {}
    for name, (sl, offset) in sides.items():
        sel = idx[sl].ravel()
        picks[name] = sel
        rows.append(sel)
        cols.append(sel + offset)
    return np.concatenate(rows), np.concatenate(cols), picks


def assemble_2d(problem: PoissonProblem) -> tuple[Tensor, Tensor]:
    """Dense interior system ``A u = rhs``; both are differentiable in ``D``."""
    g = problem.grid
    D = problem.D
    ny, nx = g.N_y - 2, g.N_x - 2
    lead = D.shape[:-2]
    M = nx * ny
    ix2, iy2 = 1.0 / g.dx ** 2, 1.0 / g.dy ** 2

    Dxf = 0.5 * (D[..., :, 1:] + D[..., :, :-1])   # (.., N_y, N_x-1), face i+1/2
    Dyf = 0.5 * (D[..., 1:, :] + D[..., :-1, :])   # (.., N_y-1, N_x), face j+1/2
    W = Dxf[..., 1:-1, :-1] * ix2
    E = Dxf[..., 1:-1, 1:] * ix2
    S = Dyf[..., :-1, 1:-1] * iy2
    N = Dyf[..., 1:, 1:-1] * iy2
    flat = {k: v.reshape(lead + (M,)) for k, v in dict(W=W, E=E, S=S, N=N).items()}

    rows, cols, picks = _stencil_layout(ny, nx)
    diag = -(flat["W"] + flat["E"] + flat["S"] + flat["N"])
    values = ad.concatenate([diag] + [flat[k][..., picks[k]] for k in ("W", "E", "S", "N")],
                            axis=-1)
    A = ad.scatter(values, rows, cols, M, M)

    # boundary neighbours move to the right-hand side
    ub = problem.u_bc
    bnd = {k: np.zeros((ny, nx)) for k in ("W", "E", "S", "N")}
    bnd["W"][:, 0] = ub[1:-1, 0]
    bnd["E"][:, -1] = ub[1:-1, -1]
    bnd["S"][0, :] = ub[0, 1:-1]
    bnd["N"][-1, :] = ub[-1, 1:-1]
    shape = lead + (M,)
    boundary = None
    for k, arr in bnd.items():
        if not arr.any():
            continue
        term = flat[k] * np.broadcast_to(arr.ravel(), shape)
        boundary = term if boundary is None else boundary + term
    f_int = np.broadcast_to(-problem.f[1:-1, 1:-1].ravel(), shape)
    rhs = ad.Tensor(f_int) if boundary is None else f_int - boundary
    return A, rhs


def solve_2d(problem: PoissonProblem, full: bool = False) -> Tensor:
    """Interior solution ``(..., N_y-2, N_x-2)``; with ``full`` the boundary ring is included."""
    A, rhs = assemble_2d(problem)
    g = problem.grid
    lead = problem.D.shape[:-2]
    u = ad.linear_solve(A, rhs).reshape(lead + (g.N_y - 2, g.N_x - 2))
    return embed_boundary(u, problem.u_bc) if full else u


def embed_boundary(u_int, u_bc: np.ndarray) -> Tensor:
    """Surround an interior field with the boundary values of ``u_bc``."""
    u_int = ad.as_tensor(u_int)
    lead = u_int.shape[:-2]
    ny, nx = u_int.shape[-2:]
    left = np.broadcast_to(u_bc[1:-1, :1], lead + (ny, 1))
    right = np.broadcast_to(u_bc[1:-1, -1:], lead + (ny, 1))
    mid = ad.concatenate([ad.Tensor(left), u_int, ad.Tensor(right)], axis=-1)
    bottom = np.broadcast_to(u_bc[:1, :], lead + (1, nx + 2))
    top = np.broadcast_to(u_bc[-1:, :], lead + (1, nx + 2))
    return ad.concatenate([ad.Tensor(bottom), mid, ad.Tensor(top)], axis=-2)


def assemble_1d(D, f, u_left: float, u_right: float, grid: Grid1D) -> tuple[Tensor, Tensor]:
    D = ad.as_tensor(D)
    if D.shape[-1] != grid.N:
        raise ad.ShapeError(f"D has {D.shape[-1]} nodes, grid has {grid.N}")
    _check_positive(D)
    n = grid.N - 2
    lead = D.shape[:-1]
    ix2 = 1.0 / grid.dx ** 2
    face = 0.5 * (D[..., 1:] + D[..., :-1]) * ix2        # (.., N-1)
    west, east = face[..., :-1], face[..., 1:]           # (.., n)
    idx = np.arange(n)
    values = ad.concatenate([-(west + east), west[..., 1:], east[..., :-1]], axis=-1)
    rows = np.concatenate([idx, idx[1:], idx[:-1]])
    cols = np.concatenate([idx, idx[:-1], idx[1:]])
    A = ad.scatter(values, rows, cols, n, n)

    f = np.broadcast_to(np.asarray(f, dtype=np.float64), (grid.N,))
    bl = np.zeros(n)
    br = np.zeros(n)
    bl[0], br[-1] = u_left, u_right
    shape = lead + (n,)
    rhs = (np.broadcast_to(-f[1:-1], shape) - west * np.broadcast_to(bl, shape)
           - east * np.broadcast_to(br, shape))
    return A, rhs


def solve_1d(D, f, u_left: float, u_right: float, grid: Grid1D) -> Tensor:
    """Nodal solution ``(..., N)`` including the two Dirichlet end values."""
    A, rhs = assemble_1d(D, f, u_left, u_right, grid)
    u = ad.linear_solve(A, rhs)
    lead = u.shape[:-1]
    return ad.concatenate([ad.Tensor(np.full(lead + (1,), float(u_left))), u,
                           ad.Tensor(np.full(lead + (1,), float(u_right)))], axis=-1)
