"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor`. When any input requires a
gradient, the result remembers its parents together with a backward rule, and
:func:`backward` replays the recorded graph in reverse topological order.
Node ids come from a global counter, so a child always carries a larger id
than its parents and sorting by id is a valid topological order.

Broadcasting is deliberately restricted: binary operations accept either two
operands of identical shape or one operand holding a single element. Anything
else has to be spelled out with :func:`broadcast_to`.
"""
from __future__ import annotations

import itertools
import warnings
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "Tensor", "Tape", "NonFiniteError", "ShapeError", "SingularMatrixError",
    "RankDeficientError", "as_tensor", "make_node", "backward", "grad_check",
    "add", "sub", "mul", "div", "neg", "exp", "log", "tanh", "relu", "sigmoid",
    "sqrt", "square", "sin", "cos", "absolute", "sum", "mean", "matmul",
    "transpose", "reshape", "broadcast_to", "concatenate", "stack",
    "scatter", "linear_solve", "lstsq_solve",
]

PIVOT_RTOL = 1e-12

_node_ids = itertools.count()


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class ShapeError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised by :func:`linear_solve` when a pivot is numerically zero."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is singular at pivot {pivot}")


class RankDeficientError(SingularMatrixError):
    pass


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by '{op}'")


class Tensor:
    """A float64 array that may take part in reverse-mode differentiation.

    Parameters
    ----------
    data : array_like
        Values; copied and converted to float64.
    requires_grad : bool
        Mark the tensor as a trainable leaf.
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids) if requires_grad else None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    @property
    def mT(self) -> "Tensor":
        """Swap the last two axes."""
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return transpose(self, axes)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else self.data.item()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, index): return _getitem(self, index)

    def sum(self, axis=None): return sum(self, axis)
    def mean(self, axis=None): return mean(self, axis)
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable,
              op: str) -> Tensor:
    """Wrap the result of a custom operation.

    ``backward_fn(g)`` receives the upstream gradient (same shape as ``data``)
    and returns one gradient per parent, or ``None`` for parents that do not
    need one. It is only called for parents with ``requires_grad``.
    """
    data = np.asarray(data, dtype=np.float64)
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node_id = next(_node_ids)
        out.parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out.node_id = None
        out.parents = ()
        out._backward = None
    return out


# ----------------------------------------------------------------------------
# tape and backward pass

class Tape:
    """Topologically ordered record of the graph reachable from a loss.

    Each entry is the node itself; op kind, parents and the saved forward
    values live on the node (the latter inside its backward closure).
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        seen: dict[int, Tensor] = {}
        stack = [output]
        while stack:
            node = stack.pop()
            if not node.requires_grad or node.node_id in seen:
                continue
            seen[node.node_id] = node
            stack.extend(node.parents)
        return cls([seen[k] for k in sorted(seen)])

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, output: Tensor) -> dict[int, np.ndarray]:
        grads: dict[int, np.ndarray] = {output.node_id: np.ones_like(output.data)}
        for node in reversed(self.nodes):
            g = grads.get(node.node_id)
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64)
                if pg.shape != parent.data.shape:
                    pg = pg.reshape(parent.data.shape)
                prev = grads.get(parent.node_id)
                grads[parent.node_id] = pg if prev is None else prev + pg
        return grads


def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Back-propagate from a scalar ``loss``.

    Sets ``.grad`` on every reachable leaf that requires a gradient and on
    every tensor in ``leaves`` (zeros when the loss does not depend on it).
    Returns the full gradient map keyed by node id.
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    leaves = list(leaves) if leaves is not None else []
    if not loss.requires_grad:
        grads: dict[int, np.ndarray] = {}
    else:
        tape = Tape.from_output(loss)
        grads = tape.backward(loss)
        for node in tape.nodes:
            if node.op == "leaf":
                node.grad = grads.get(node.node_id, np.zeros_like(node.data))
    for leaf in leaves:
        if leaf.node_id is None or leaf.node_id not in grads:
            leaf.grad = np.zeros_like(leaf.data)
            if leaf.node_id is not None:
                grads[leaf.node_id] = leaf.grad
    return grads


def grad_check(f: Callable, x0, h: float = 1e-5, floor: float = 1e-12) -> float:
    """Largest relative deviation between tape and central-difference gradients.

    ``f`` maps one tensor (or a list of tensors, when ``x0`` is a list) to a
    scalar tensor. The error of a component is
    ``|tape - fd| / max(|fd|, floor)``.
    """
    multi = isinstance(x0, (list, tuple))
    arrays = [np.array(a, dtype=np.float64) for a in (x0 if multi else [x0])]

    def call(arrs, grad):
        xs = [Tensor(a, requires_grad=grad) for a in arrs]
        out = f(xs if multi else xs[0])
        return xs, out

    xs, out = call(arrays, True)
    backward(out, xs)
    worst = 0.0
    for k, base in enumerate(arrays):
        tape_grad = xs[k].grad.reshape(-1)
        for i in range(base.size):
            vals = []
            for step in (h, -h):
                pert = [a.copy() for a in arrays]
                pert[k].reshape(-1)[i] += step
                try:
                    _, y = call(pert, False)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"f is not finite at perturbed point {i}") from exc
                vals.append(y.item())
            fd = (vals[0] - vals[1]) / (2.0 * h)
            err = abs(tape_grad[i] - fd) / max(abs(fd), floor)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------------------
# elementwise operations

def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ "
                         "(only scalar-with-array broadcasting is allowed)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.full(shape, g.sum()) if int(np.prod(shape)) == 1 else g.reshape(shape)


def _result_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    if a.size == 1 and b.size == 1:
        return a.shape if a.ndim >= b.ndim else b.shape
    return b.shape if a.size == 1 else a.shape


def _operands(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, op)
    shape = _result_shape(a, b)
    ad = a.data if a.size != 1 or a.shape == shape else a.data.reshape(())
    bd = b.data if b.size != 1 or b.shape == shape else b.data.reshape(())
    return a, b, ad, bd, shape


def add(a, b) -> Tensor:
    a, b, ad, bd, shape = _operands(a, b, "add")
    out = (ad + bd).reshape(shape)
    return make_node(out, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                             _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b, ad, bd, shape = _operands(a, b, "sub")
    out = (ad - bd).reshape(shape)
    return make_node(out, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                             _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b, ad, bd, shape = _operands(a, b, "mul")
    out = (ad * bd).reshape(shape)
    return make_node(out, (a, b), lambda g: (_unbroadcast(g * bd, a.shape),
                                             _unbroadcast(g * ad, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b, ad, bd, shape = _operands(a, b, "div")
    if np.any(bd == 0.0):
        raise ZeroDivisionError("division by zero in 'div'")
    out = (ad / bd).reshape(shape)
    return make_node(out, (a, b), lambda g: (_unbroadcast(g / bd, a.shape),
                                             _unbroadcast(-g * out / bd, b.shape)), "div")


def _unary(x, value: np.ndarray, deriv: Callable[[], np.ndarray], op: str) -> Tensor:
    return make_node(value, (x,), lambda g: (g * deriv(),), op)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return make_node(-x.data, (x,), lambda g: (-g,), "neg")


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _unary(x, y, lambda: y, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("log of non-positive value")
    return _unary(x, np.log(x.data), lambda: 1.0 / x.data, "log")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _unary(x, y, lambda: 1.0 - y * y, "tanh")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _unary(x, np.where(mask, x.data, 0.0), lambda: mask, "relu")


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _logistic(x.data)
    return _unary(x, y, lambda: y * (1.0 - y), "sigmoid")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        # the derivative is unbounded at zero
        raise ValueError("sqrt requires strictly positive input")
    y = np.sqrt(x.data)
    return _unary(x, y, lambda: 0.5 / y, "sqrt")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, x.data * x.data, lambda: 2.0 * x.data, "square")


def sin(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.sin(x.data), lambda: np.cos(x.data), "sin")


def cos(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.cos(x.data), lambda: -np.sin(x.data), "cos")


def absolute(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.abs(x.data), lambda: np.sign(x.data), "abs")


# ----------------------------------------------------------------------------
# reductions and shape manipulation

def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    y = np.sum(x.data, axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)
    return make_node(y, (x,), back, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(count))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    y = x.data.reshape(shape)
    return make_node(y, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = np.argsort(axes)
    return make_node(np.transpose(x.data, axes), (x,),
                     lambda g: (np.transpose(g, inverse),), "transpose")


def broadcast_to(x, shape) -> Tensor:
    """Explicit numpy-style broadcast; the backward pass sums the copies."""
    x = as_tensor(x)
    shape = tuple(shape)
    y = np.broadcast_to(x.data, shape).copy()
    lead = len(shape) - x.ndim
    keep = tuple(i + lead for i, n in enumerate(x.shape) if n == 1 and shape[i + lead] != 1)

    def back(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        if keep:
            g = g.sum(axis=tuple(k - lead for k in keep), keepdims=True)
        return (g,)
    return make_node(y, (x,), back, "broadcast_to")


def _getitem(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        raise TypeError("index with arrays, not tensors")
    y = x.data[index]

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)
    return make_node(np.array(y), (x,), back, "getitem")


def concatenate(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return make_node(y, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concatenate")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    y = np.stack([t.data for t in tensors], axis=axis)
    return make_node(y, tensors,
                     lambda g: tuple(np.moveaxis(g, axis, 0)), "stack")


def scatter(values, rows: np.ndarray, cols: np.ndarray, n_rows: int, n_cols: int) -> Tensor:
    """Sum ``values[..., k]`` into a dense ``(..., n_rows, n_cols)`` matrix.

    Duplicate ``(rows[k], cols[k])`` pairs accumulate. Leading axes of
    ``values`` are kept as batch axes.
    """
    values = as_tensor(values)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if values.shape[-1] != rows.size or rows.size != cols.size:
        raise ShapeError("scatter: values, rows and cols disagree in length")
    lead = values.shape[:-1]
    flat = rows * n_cols + cols
    out = np.zeros(lead + (n_rows * n_cols,))
    if len(np.unique(flat)) == flat.size:
        out[..., flat] = values.data
    else:
        for k in range(flat.size):
            out[..., flat[k]] += values.data[..., k]
    out = out.reshape(lead + (n_rows, n_cols))

    def back(g):
        return (g.reshape(lead + (n_rows * n_cols,))[..., flat],)
    return make_node(out, (values,), back, "scatter")


# ----------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product of 2-D operands or stacks with identical leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least two axes")
    if a.shape[:-2] != b.shape[:-2] and not (a.ndim == 2 or b.ndim == 2):
        raise ShapeError(f"matmul: batch shapes {a.shape[:-2]} and {b.shape[:-2]} differ")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} @ {b.shape} disagree")
    y = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if ga.shape != a.shape:
            ga = ga.reshape((-1,) + a.shape).sum(axis=0)
        if gb.shape != b.shape:
            gb = gb.reshape((-1,) + b.shape).sum(axis=0)
        return ga, gb
    return make_node(y, (a, b), back, "matmul")


def _lu(a: np.ndarray, index: int | None = None):
    scale = np.abs(a).max()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(pivots <= PIVOT_RTOL * scale) if scale > 0 else np.arange(len(a))
    if bad.size:
        where = f" (batch item {index})" if index is not None else ""
        raise SingularMatrixError(int(bad[0]), f"matrix is singular at pivot {int(bad[0])}{where}")
    return lu, piv


def linear_solve(A, b) -> Tensor:
    """Solve ``A x = b`` by LU with partial pivoting.

    ``A`` is ``(..., n, n)``; ``b`` is ``(..., n)`` or ``(..., n, k)`` with the
    same leading axes. The backward pass reuses the factorization: with
    ``s = A^{-T} xbar`` the gradients are ``s`` for ``b`` and ``-s x^T`` for
    ``A``.
    """
    A, b = as_tensor(A), as_tensor(b)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"linear_solve needs a square matrix, got {A.shape}")
    if b.shape[:A.ndim - 2] != A.shape[:-2] or b.shape[A.ndim - 2] != A.shape[-1]:
        raise ShapeError(f"linear_solve: A {A.shape} and b {b.shape} disagree")
    n = A.shape[-1]
    batch = A.shape[:-2]
    Ad = A.data.reshape((-1, n, n))
    bd = b.data.reshape((Ad.shape[0], n, -1))
    factors = []
    x = np.empty_like(bd)
    for k in range(Ad.shape[0]):
        fac = _lu(Ad[k], k if batch else None)
        factors.append(fac)
        x[k] = scipy.linalg.lu_solve(fac, bd[k], check_finite=False)
    xout = x.reshape(b.shape)

    def back(g):
        gd = g.reshape(x.shape)
        s = np.empty_like(gd)
        for k, fac in enumerate(factors):
            s[k] = scipy.linalg.lu_solve(fac, gd[k], trans=1, check_finite=False)
        gA = -(s @ np.swapaxes(x, -1, -2)) if A.requires_grad else None
        return (None if gA is None else gA.reshape(A.shape), s.reshape(b.shape))
    return make_node(xout, (A, b), back, "linear_solve")


def lstsq_solve(A, b) -> Tensor:
    """Least-squares solution of an overdetermined full-rank system.

    The solution is the one defined by the normal equations
    ``A^T A x = A^T b``, but it is computed from a thin QR factorization,
    which avoids squaring the condition number. With ``r = b - A x`` and
    ``s = (A^T A)^{-1} xbar`` the gradients are ``A s`` for ``b`` and
    ``r s^T - A s x^T`` for ``A``.
    """
    A, b = as_tensor(A), as_tensor(b)
    if A.ndim < 2 or A.shape[-2] < A.shape[-1]:
        raise ShapeError(f"lstsq_solve needs rows >= columns, got {A.shape}")
    vector = b.ndim == A.ndim - 1
    bm = b.data[..., None] if vector else b.data
    if bm.shape[:-1] != A.shape[:-1]:
        raise ShapeError(f"lstsq_solve: A {A.shape} and b {b.shape} disagree")
    Q, R = np.linalg.qr(A.data)
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    scale = diag.max(axis=-1, keepdims=True)
    bad = np.argwhere(~(diag > PIVOT_RTOL * scale))
    if bad.size:
        col = int(bad[0, -1])
        raise RankDeficientError(col, f"matrix is rank deficient at column {col}")
    x = np.linalg.solve(R, np.swapaxes(Q, -1, -2) @ bm)
    xout = x[..., 0] if vector else x

    def back(g):
        gm = g[..., None] if vector else g
        Rt = np.swapaxes(R, -1, -2)
        s = np.linalg.solve(R, np.linalg.solve(Rt, gm))
        As = A.data @ s
        gA = None
        if A.requires_grad:
            r = bm - A.data @ x
            gA = r @ np.swapaxes(s, -1, -2) - As @ np.swapaxes(x, -1, -2)
        gb = As[..., 0] if vector else As
        return gA, gb
    return make_node(xout, (A, b), back, "lstsq_solve")
