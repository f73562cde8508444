"""Estimators that learn hidden PDE parameters by reconstructing solution data.

Each estimator couples a bottleneck (an encoder network, or a table of raw
trainable values in ``mode="direct"``) with a differentiable solver layer.
Training minimises the mismatch between the solver output and the observed
data only. ``predict`` returns the hidden parameters, so ``score`` is the R^2
of recovered against true parameters.

Input layouts:

* static problems take solution fields, ``(n_samples, N)`` in 1-D and
  ``(n_samples, N_y, N_x)`` in 2-D;
* time-dependent problems take shift pairs ``(n_pairs, 2, N)`` where
  ``X[:, 0]`` is the input snapshot and ``X[:, 1]`` the snapshot ``p`` steps
  later.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import autodiff as ad
from . import burgers_fd, nn, poisson, rbf, zernike
from .autodiff import Tensor

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    """Training produced a non-finite loss or the solver blew up."""


def _logit(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-12, 1 - 1e-12)
    return np.log(p) - np.log1p(-p)


def _bounds_array(bounds, k: int) -> np.ndarray:
    b = np.asarray(bounds, dtype=np.float64)
    b = np.broadcast_to(b, (k, 2)) if b.ndim < 2 else b
    if b.shape != (k, 2):
        raise ValueError(f"bounds must be a pair or {k} pairs, got shape {b.shape}")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("every bound needs lower < upper")
    return np.array(b)


class BiPDEEstimator(RegressorMixin, BaseEstimator):
    """Shared training loop; subclasses supply the solver layer.

    Subclasses implement ``_n_hidden``, ``_encoder_input``, ``_decode``,
    ``_hidden`` and ``_target`` and may override ``_table_layout`` and
    ``_initial_fraction``.
    """

    _sample_ndim = 1

    # -- hooks -------------------------------------------------------------
    def _n_hidden(self) -> int:
        raise NotImplementedError

    def _encoder_input(self, X: np.ndarray) -> np.ndarray:
        return X

    def _default_encoder(self) -> str:
        return "d64"

    def _decode(self, z: Tensor, X: np.ndarray) -> Tensor:
        """Solver output for bottleneck values ``z`` in ``(0, 1)``."""
        raise NotImplementedError

    def _target(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hidden(self, z: np.ndarray) -> np.ndarray:
        """Physical parameters from bottleneck values."""
        raise NotImplementedError

    def _table_layout(self, n_samples: int) -> tuple[int, int]:
        """(rows, shared columns) of the direct-mode table."""
        return (n_samples, 0) if self.per_sample else (1, 0)

    def _initial_fraction(self) -> np.ndarray:
        return np.full(self._n_hidden(), 0.5)

    def _prepare(self, X: np.ndarray) -> None:
        """Called once at the start of ``fit``."""

    # -- validation --------------------------------------------------------
    def _check_X(self, X, reset: bool) -> np.ndarray:
        X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64)
        if X.ndim != self._sample_ndim + 1:
            raise ValueError(f"{type(self).__name__} expects {self._sample_ndim + 1}-D input, "
                             f"got shape {X.shape}")
        if reset:
            self.sample_shape_ = X.shape[1:]
        elif X.shape[1:] != self.sample_shape_:
            raise ValueError(f"samples have shape {X.shape[1:]}, model was fitted on "
                             f"{self.sample_shape_}")
        return X

    # -- model -------------------------------------------------------------
    def _build_model(self, X: np.ndarray, rng: np.random.Generator) -> nn.Sequential:
        k = self._n_hidden()
        if self.mode == "direct":
            rows, shared = self._table_layout(len(X))
            init = _logit(self._initial_fraction())
            return nn.Sequential([nn.ParameterTable(rows, k, shared, init=init)])
        if self.mode == "encoder":
            spec = self.encoder if self.encoder is not None else self._default_encoder()
            in_shape = self._encoder_input(X[:1]).shape[1:]
            model = nn.build_encoder(spec, in_shape, k, "sigmoid", rng=rng, dropout=self.dropout)
            # start from the default bottleneck, not the centre of every range
            model.layers[-1].b.data[:] = _logit(self._initial_fraction())
            return model
        raise ValueError(f"mode must be 'direct' or 'encoder', got {self.mode!r}")

    def _fit_scaling(self, X: np.ndarray) -> None:
        # per-feature centring, one global scale so flat features are not blown up
        Z = self._encoder_input(X)
        self.input_shift_ = Z.mean(axis=0)
        spread = float(np.std(Z - self.input_shift_))
        self.input_scale_ = spread if spread > 0 else 1.0

    def _scaled_input(self, X: np.ndarray) -> np.ndarray:
        Z = self._encoder_input(X)
        if self.mode != "encoder":
            return Z
        return (Z - self.input_shift_) / self.input_scale_

    def _bottleneck(self, X: np.ndarray, index=None, training=False, rng=None) -> Tensor:
        out = self.model_(self._scaled_input(X), training=training, rng=rng, index=index)
        return ad.sigmoid(out) if self.model_.is_direct else out

    def _batch_loss(self, X, index, training=False, rng=None) -> Tensor:
        z = self._bottleneck(X, index, training, rng)
        return nn.loss(self.loss, self._decode(z, X), self._target(X))

    # -- public API --------------------------------------------------------
    def fit(self, X, y=None):
        """Train on observations ``X``; ``y`` is ignored (training is self-supervised)."""
        X = self._check_X(X, reset=True)
        if not len(X):
            raise ValueError("cannot fit on an empty dataset")
        rng = np.random.default_rng(self.random_state)
        self._prepare(X)
        if self.mode == "encoder":
            self._fit_scaling(X)
        self.model_ = self._build_model(X, rng)
        params = self.model_.parameters()
        opt = nn.Adam(params, lr=self.lr, eps=self.eps)
        n = len(X)
        bs = n if not self.batch_size else min(int(self.batch_size), n)
        self.history_ = []
        for epoch in range(int(self.epochs)):
            order = rng.permutation(n) if bs < n else np.arange(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                try:
                    loss = self._batch_loss(X[idx], idx, training=True, rng=rng)
                except (ad.NonFiniteError, burgers_fd.BlowUpError) as exc:
                    raise TrainingError(f"epoch {epoch}: {exc}") from exc
                ad.backward(loss, params)
                opt.step()
                total += loss.item() * len(idx)
            self.history_.append(total / n)
            if self.verbose and (epoch % max(1, int(self.epochs) // 10) == 0):
                log.info("epoch %d loss %.6e", epoch, self.history_[-1])
        if self.mode == "direct" and self.newton_steps:
            self._newton_refine(X)
        self.final_loss_ = self._full_loss(X)
        return self

    def _full_loss(self, X) -> float:
        try:
            return self._batch_loss(X, np.arange(len(X))).item()
        except (ad.NonFiniteError, burgers_fd.BlowUpError) as exc:
            raise TrainingError(str(exc)) from exc

    def _newton_refine(self, X) -> None:
        """Polish direct-mode values with Newton steps on the full-batch loss.

        The Hessian is a central difference of tape gradients, so this is only
        attempted for small tables.
        """
        params = self.model_.parameters()
        sizes = [p.size for p in params]
        if sum(sizes) > 16:
            log.info("skipping Newton refinement for %d parameters", sum(sizes))
            return
        index = np.arange(len(X))

        def set_theta(theta):
            for p, chunk in zip(params, np.split(theta, np.cumsum(sizes)[:-1])):
                p.data = chunk.reshape(p.shape)

        def evaluate(theta):
            set_theta(theta)
            loss = self._batch_loss(X, index)
            ad.backward(loss, params)
            return loss.item(), np.concatenate([p.grad.ravel() for p in params])

        theta = np.concatenate([p.data.ravel() for p in params])
        loss, g = evaluate(theta)
        for _ in range(int(self.newton_steps)):
            h = 1e-4 * np.maximum(1.0, np.abs(theta))
            H = np.empty((theta.size, theta.size))
            for j in range(theta.size):
                e = np.zeros_like(theta)
                e[j] = h[j]
                H[:, j] = (evaluate(theta + e)[1] - evaluate(theta - e)[1]) / (2 * h[j])
            H = 0.5 * (H + H.T)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or step @ g <= 0:
                break
            accepted = False
            for _ in range(20):
                trial_loss, trial_g = evaluate(theta - step)
                if trial_loss <= loss:
                    theta, loss, g = theta - step, trial_loss, trial_g
                    accepted = True
                    break
                step = 0.5 * step
            if not accepted or np.max(np.abs(step)) < 1e-13:
                break
        set_theta(theta)
        for p in params:
            p.grad = None

    def fitted_state(self) -> dict:
        """JSON-ready state that, with the model weights, restores a fitted estimator."""
        check_is_fitted(self, "model_")
        state = {"sample_shape": list(self.sample_shape_)}
        if self.mode == "encoder":
            state["input_shift"] = np.asarray(self.input_shift_).tolist()
            state["input_scale"] = float(self.input_scale_)
        return state

    def restore(self, model: nn.Sequential, state: dict):
        """Attach trained ``model`` weights and the output of :meth:`fitted_state`."""
        self.sample_shape_ = tuple(int(n) for n in state["sample_shape"])
        self._prepare(np.zeros((1,) + self.sample_shape_))
        if self.mode == "encoder":
            self.input_shift_ = np.asarray(state["input_shift"], dtype=np.float64)
            self.input_scale_ = float(state["input_scale"])
        self.model_ = model
        return self

    def bottleneck(self, X) -> np.ndarray:
        """Raw bottleneck values in ``(0, 1)`` for ``X``."""
        check_is_fitted(self, "model_")
        X = self._check_X(X, reset=False)
        if self.model_.is_direct:
            table = self.model_.layers[0]
            if table.n_rows not in (1, len(X)):
                raise ValueError(f"direct mode holds values for {table.n_rows} samples, got {len(X)}")
        return self._bottleneck(X).data

    def predict(self, X) -> np.ndarray:
        """Hidden parameters, one row per sample.

        In direct mode there is no encoder: the result is the table fitted to
        the training samples, so ``X`` must have as many rows as the training
        data (or the table must be shared).
        """
        return self._hidden(self.bottleneck(X))


# ----------------------------------------------------------------------------
# Poisson

class Poisson1DEstimator(BiPDEEstimator):
    """Recover ``a`` in ``D(x) = 1 + a0 + a1 x`` from 1-D Poisson solutions.

    Parameters
    ----------
    x_lo, x_hi : float
        Domain; fields are sampled at ``X.shape[1]`` uniform nodes.
    u_bc : float
        Dirichlet value at both ends.
    bounds : pair or (2, 2) array
        Range of each coefficient; the bottleneck is mapped affinely onto it.
    source : callable, optional
        ``f(x)``; defaults to ``sin(pi x)``.
    """

    def __init__(self, mode="encoder", encoder=None, bounds=(0.0, 1.0), x_lo=-1.0, x_hi=1.0,
                 u_bc=0.2, source=None, epochs=100, batch_size=100, lr=1e-3, eps=1e-8, loss="mse",
                 dropout=0.0, per_sample=True, newton_steps=0, random_state=0, verbose=0):
        self.mode = mode
        self.encoder = encoder
        self.bounds = bounds
        self.x_lo = x_lo
        self.x_hi = x_hi
        self.u_bc = u_bc
        self.source = source
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.loss = loss
        self.dropout = dropout
        self.per_sample = per_sample
        self.newton_steps = newton_steps
        self.random_state = random_state
        self.verbose = verbose

    def _n_hidden(self):
        return 2

    def _default_encoder(self):
        return "d100,d40"

    def _prepare(self, X):
        self.grid_ = poisson.Grid1D(self.x_lo, self.x_hi, X.shape[1])
        x = self.grid_.x
        self.f_ = np.sin(np.pi * x) if self.source is None else np.asarray(self.source(x), float)
        self.bounds_ = _bounds_array(self.bounds, 2)

    def _hidden(self, z):
        lo, hi = self.bounds_[:, 0], self.bounds_[:, 1]
        return lo + (hi - lo) * z

    def diffusion(self, a) -> Tensor:
        a = ad.as_tensor(a)
        n, N = a.shape[0], self.grid_.N
        x = np.broadcast_to(self.grid_.x, (n, N))
        return 1.0 + ad.broadcast_to(a[:, :1], (n, N)) + ad.broadcast_to(a[:, 1:], (n, N)) * x

    def _decode(self, z, X):
        lo, hi = self.bounds_[:, 0], self.bounds_[:, 1]
        a = np.broadcast_to(lo, z.shape) + z * np.broadcast_to(hi - lo, z.shape)
        u = poisson.solve_1d(self.diffusion(a), self.f_, self.u_bc, self.u_bc, self.grid_)
        return u[:, 1:-1]

    def _target(self, X):
        return X[:, 1:-1]


class PoissonZernikeEstimator(BiPDEEstimator):
    """Recover a Zernike expansion of ``D`` from 2-D Poisson solutions.

    ``D = offset + sum_k scale_k a_k Z_k`` with ``a_k`` inside ``bounds``;
    ``predict`` returns the ``a_k``.

    Parameters
    ----------
    modes : list of (n, m, parity)
        Zernike modes carrying the hidden field.
    coef_scale : sequence of float, optional
        Per-mode factors ``scale_k`` (default 1).
    half_width : float
        Fields live on ``[-half_width, half_width]^2``, which must fit in the unit disk.
    source, boundary : callable
        ``f(X, Y)`` and ``u_bc(X, Y)`` on the node mesh.
    """

    _sample_ndim = 2

    def __init__(self, modes=((0, 0, "even"), (1, 1, "odd"), (1, 1, "even")), offset=0.0,
                 coef_scale=None, bounds=(-1.0, 1.0), half_width=1.0 / np.sqrt(2.0),
                 source=None, boundary=None, mode="direct", encoder=None, epochs=2000,
                 batch_size=None, lr=1e-2, eps=1e-8, loss="mse", dropout=0.2, per_sample=False,
                 newton_steps=0, initial=None, random_state=0, verbose=0):
        self.modes = modes
        self.offset = offset
        self.coef_scale = coef_scale
        self.bounds = bounds
        self.half_width = half_width
        self.source = source
        self.boundary = boundary
        self.mode = mode
        self.encoder = encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.loss = loss
        self.dropout = dropout
        self.per_sample = per_sample
        self.newton_steps = newton_steps
        self.initial = initial
        self.random_state = random_state
        self.verbose = verbose

    def _n_hidden(self):
        return len(self.modes)

    def _default_encoder(self):
        return "c32,p,c64,p,c128,p,f,s128,o"

    def _encoder_input(self, X):
        return X[:, None, :, :]

    def _prepare(self, X):
        if self.half_width * np.sqrt(2.0) > 1.0 + 1e-12:
            raise ValueError("the square must fit inside the unit disk")
        ny, nx = X.shape[1:]
        self.grid_ = poisson.Grid2D(-self.half_width, self.half_width,
                                    -self.half_width, self.half_width, nx, ny)
        Xm, Ym = self.grid_.mesh()
        self.basis_ = zernike.ZernikeBasis(modes=self.modes)
        k = len(self.basis_)
        self.scale_ = np.ones(k) if self.coef_scale is None else np.asarray(self.coef_scale, float)
        if self.scale_.shape != (k,):
            raise ValueError(f"coef_scale needs {k} entries")
        self.bounds_ = _bounds_array(self.bounds, k)
        self.Z_ = self.basis_.matrix(Xm, Ym) * self.scale_          # (points, k)
        self.f_ = np.zeros(self.grid_.shape) if self.source is None else self.source(Xm, Ym)
        self.u_bc_ = np.zeros(self.grid_.shape) if self.boundary is None else self.boundary(Xm, Ym)

    def _initial_fraction(self):
        if self.initial is None:
            return np.full(self._n_hidden(), 0.5)
        lo, hi = self.bounds_[:, 0], self.bounds_[:, 1]
        return (np.asarray(self.initial, float) - lo) / (hi - lo)

    def _hidden(self, z):
        lo, hi = self.bounds_[:, 0], self.bounds_[:, 1]
        return lo + (hi - lo) * z

    def diffusion(self, a) -> Tensor:
        """Nodal ``D`` fields ``(n, N_y, N_x)`` for coefficient rows ``a``."""
        a = ad.as_tensor(a)
        D = a @ self.Z_.T + self.offset
        return D.reshape((a.shape[0],) + self.grid_.shape)

    def diffusion_field(self, X) -> np.ndarray:
        return self.diffusion(self.predict(X)).data

    def _decode(self, z, X):
        lo, hi = self.bounds_[:, 0], self.bounds_[:, 1]
        a = np.broadcast_to(lo, z.shape) + z * np.broadcast_to(hi - lo, z.shape)
        prob = poisson.PoissonProblem(self.grid_, self.diffusion(a), self.f_, self.u_bc_)
        return poisson.solve_2d(prob)

    def _target(self, X):
        return X[:, 1:-1, 1:-1]


# ----------------------------------------------------------------------------
# Burgers

class _ShiftPairMixin:
    _sample_ndim = 2

    def _check_X(self, X, reset):
        X = super()._check_X(X, reset)
        if X.shape[1] != 2:
            raise ValueError(f"expected shift pairs of shape (n, 2, N), got {X.shape}")
        return X

    def _target(self, X):
        return X[:, 1]

    def _param_bounds(self) -> np.ndarray:
        rows = [self.nu_range]
        if self.gamma_range is not None:
            rows.append(self.gamma_range)
        return _bounds_array(rows, len(rows))

    def _initial_params(self) -> np.ndarray:
        b = self._param_bounds()
        if self.initial is None:
            return b.mean(axis=1)
        return np.asarray(self.initial, dtype=np.float64).reshape(len(b))


class BurgersFDEstimator(_ShiftPairMixin, BiPDEEstimator):
    """Recover ``nu`` (and optionally ``gamma``) with the compact finite-difference stepper.

    Each input snapshot is advanced ``p`` steps of size ``dt`` and compared
    with its target. ``gamma_range=None`` keeps ``gamma`` fixed at ``gamma``.
    """

    def __init__(self, nu_range=(0.0, 0.01), gamma_range=None, gamma=1.0, dt=1e-3, p=1,
                 x_L=-1.0, x_R=1.0, mode="direct", encoder=None, epochs=200, batch_size=None,
                 lr=1e-2, eps=1e-8, loss="mse", dropout=0.0, per_sample=False, newton_steps=8,
                 initial=None, random_state=0, verbose=0):
        self.nu_range = nu_range
        self.gamma_range = gamma_range
        self.gamma = gamma
        self.dt = dt
        self.p = p
        self.x_L = x_L
        self.x_R = x_R
        self.mode = mode
        self.encoder = encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.loss = loss
        self.dropout = dropout
        self.per_sample = per_sample
        self.newton_steps = newton_steps
        self.initial = initial
        self.random_state = random_state
        self.verbose = verbose

    def _n_hidden(self):
        return 1 if self.gamma_range is None else 2

    def _default_encoder(self):
        return "c16:10,a,f,d32"

    def _prepare(self, X):
        N = X.shape[2]
        self.op_ = burgers_fd.build_cfd6(N, (self.x_R - self.x_L) / (N - 1))
        self.bounds_ = self._param_bounds()
        if self.p < 1:
            raise ValueError("p must be at least 1")

    def _initial_fraction(self):
        b = self.bounds_
        return (self._initial_params() - b[:, 0]) / (b[:, 1] - b[:, 0])

    def _hidden(self, z):
        b = self.bounds_
        return b[:, 0] + (b[:, 1] - b[:, 0]) * z

    def _decode(self, z, X):
        b = self.bounds_
        nu = b[0, 0] + (b[0, 1] - b[0, 0]) * z[:, 0]
        gamma = self.gamma if self.gamma_range is None else b[1, 0] + (b[1, 1] - b[1, 0]) * z[:, 1]
        U = ad.Tensor(X[:, 0])
        for _ in range(int(self.p)):
            U = burgers_fd.burgers_step(U, self.op_, nu, gamma, self.dt)
        return U


class BurgersRBFEstimator(_ShiftPairMixin, BiPDEEstimator):
    """Recover ``nu`` with the meshless stepper; seeds and shapes are trained too.

    ``X`` holds shift pairs sampled at ``points`` (default: uniform interior
    collocation points). In direct mode the seeds and shapes are shared by all
    pairs and, with ``per_sample=True``, every pair gets its own ``nu``.
    """

    def __init__(self, N_s=20, points=None, x_L=-1.0, x_R=1.0, nu_range=(0.0, 0.1),
                 gamma_range=None, gamma=1.0, c_range=(0.01, 1.0), c_init=0.25, dt=1e-3,
                 p=10, mode="direct", encoder=None, epochs=50, batch_size=None, lr=1e-3,
                 eps=1e-8, loss="mse", dropout=0.0, per_sample=True, newton_steps=0, initial=None,
                 random_state=0, verbose=0):
        self.N_s = N_s
        self.points = points
        self.x_L = x_L
        self.x_R = x_R
        self.nu_range = nu_range
        self.gamma_range = gamma_range
        self.gamma = gamma
        self.c_range = c_range
        self.c_init = c_init
        self.dt = dt
        self.p = p
        self.mode = mode
        self.encoder = encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.eps = eps
        self.loss = loss
        self.dropout = dropout
        self.per_sample = per_sample
        self.newton_steps = newton_steps
        self.initial = initial
        self.random_state = random_state
        self.verbose = verbose

    def _n_hidden(self):
        return self.config_.n_bottleneck

    def _default_encoder(self):
        return "c32:5,p,c16:5,p,f,d100"

    def _prepare(self, X):
        N_d = X.shape[2]
        g_lo, g_hi = (None, None) if self.gamma_range is None else self.gamma_range
        self.config_ = rbf.RBFConfig(N_s=int(self.N_s), N_d=N_d, x_L=self.x_L, x_R=self.x_R,
                                     dt=self.dt, c_min=self.c_range[0], c_max=self.c_range[1],
                                     nu_min=self.nu_range[0], nu_max=self.nu_range[1],
                                     gamma_min=g_lo, gamma_max=g_hi)
        pts = self.config_.collocation() if self.points is None else np.asarray(self.points, float)
        if pts.shape != (N_d,):
            raise ValueError(f"{pts.size} points for samples of length {N_d}")
        self.points_ = pts
        self.bounds_ = self._param_bounds()

    def _table_layout(self, n_samples):
        n_shared = 2 * self.config_.N_s
        return (n_samples, n_shared) if self.per_sample else (1, 0)

    def _initial_fraction(self):
        cfg = self.config_
        params = self._initial_params()
        return rbf.config_to_bottleneck(cfg, rbf.default_seeds(cfg), np.full(cfg.N_s, self.c_init),
                                        params[0], params[1] if len(params) > 1 else None)

    def _split(self, z):
        out = rbf.bottleneck_to_config(z, self.config_)
        gamma = self.gamma if len(out) == 3 else out[3]
        return out[0], out[1], out[2], gamma

    def _hidden(self, z):
        n = 2 * self.config_.N_s
        b = self.bounds_
        return b[:, 0] + (b[:, 1] - b[:, 0]) * z[:, n:]

    def discretization(self, X=None) -> tuple[np.ndarray, np.ndarray]:
        """Seeds and shapes, one row per sample (or the shared row in direct mode)."""
        check_is_fitted(self, "model_")
        if X is None:
            if not self.model_.is_direct:
                raise ValueError("encoder mode needs inputs to produce a discretization")
            z = ad.sigmoid(self.model_(np.zeros((1,) + self.sample_shape_), index=[0])).data
        else:
            z = self.bottleneck(X)
        seeds, shapes, _, _ = self._split(z)
        return seeds.data, shapes.data

    def _decode(self, z, X):
        seeds, shapes, nu, gamma = self._split(z)
        if self.model_.is_direct:
            # shared discretization: one set of matrices for the whole batch
            seeds, shapes = seeds[0], shapes[0]
        mats = rbf.build_matrices(self.config_, seeds, shapes, self.points_)
        if not self.per_sample and self.model_.is_direct:
            nu = nu[0]
            gamma = gamma[0] if isinstance(gamma, Tensor) else gamma
        return rbf.rbf_rollout(X[:, 0], int(self.p), mats, nu, gamma, self.dt)
