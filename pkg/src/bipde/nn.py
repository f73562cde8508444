"""Encoder building blocks, losses, Adam and checkpoint persistence.

Layouts follow the channels-first convention: dense inputs are
``(batch, features)``, 1-D convolutions take ``(batch, channels, length)`` and
2-D convolutions ``(batch, channels, height, width)``. All convolutions and
pools use 'valid' padding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from . import container
from .autodiff import Tensor

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "scaled_sigmoid")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def scaled_sigmoid(x, d_min: float, d_max: float) -> Tensor:
    """``d_min + (d_max - d_min) * sigmoid(x)``; output lies strictly inside the bounds."""
    if not d_min < d_max:
        raise ValueError(f"scaled_sigmoid needs d_min < d_max, got ({d_min}, {d_max})")
    return d_min + (d_max - d_min) * ad.sigmoid(x)


def activate(x: Tensor, name: str, bounds=None) -> Tensor:
    if name == "identity":
        return x
    if name == "relu":
        return ad.relu(x)
    if name == "sigmoid":
        return ad.sigmoid(x)
    if name == "tanh":
        return ad.tanh(x)
    if name == "scaled_sigmoid":
        return scaled_sigmoid(x, *bounds)
    raise ValueError(f"unknown activation '{name}'")


# ----------------------------------------------------------------------------
# layers

class Layer:
    kind = "layer"
    param_names: tuple[str, ...] = ()

    def forward(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, training: bool = False, rng=None) -> Tensor:
        return self.forward(ad.as_tensor(x), training=training, rng=rng)

    def parameters(self) -> list[Tensor]:
        return [getattr(self, n) for n in self.param_names]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: getattr(self, n).shape for n in self.param_names}

    def config(self) -> dict:
        return {}


class Dense(Layer):
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 bounds=None, rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{activation}'")
        if activation == "scaled_sigmoid" and (bounds is None or not bounds[0] < bounds[1]):
            raise ValueError("scaled_sigmoid needs bounds (d_min, d_max) with d_min < d_max")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.activation = activation
        self.bounds = None if bounds is None else (float(bounds[0]), float(bounds[1]))
        self.W = Tensor(glorot_uniform(rng, (n_out, n_in), n_in, n_out), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def forward(self, x, training=False, rng=None):
        single = x.ndim == 1
        if single:
            x = x.reshape((1, -1))
        if x.shape[-1] != self.n_in:
            raise ad.ShapeError(f"dense layer expects {self.n_in} inputs, got {x.shape[-1]}")
        z = x @ self.W.T + ad.broadcast_to(self.b.reshape((1, self.n_out)), (x.shape[0], self.n_out))
        y = activate(z, self.activation, self.bounds)
        return y.reshape((self.n_out,)) if single else y

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation,
                "bounds": None if self.bounds is None else list(self.bounds)}


def _conv1d(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    k = W.shape[2]
    if x.shape[2] < k:
        raise ad.ShapeError(f"input length {x.shape[2]} is shorter than kernel {k}")
    windows = sliding_window_view(x.data, k, axis=2)          # (B, C, L', k)
    out = np.einsum("bclk,ock->bol", windows, W.data, optimize=True)
    out += b.data[None, :, None]
    L_out = out.shape[2]

    def back(g):
        gW = np.einsum("bclk,bol->ock", windows, g, optimize=True) if W.requires_grad else None
        gb = g.sum(axis=(0, 2)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for j in range(k):
                gx[:, :, j:j + L_out] += np.einsum("bol,oc->bcl", g, W.data[:, :, j], optimize=True)
        return gx, gW, gb
    return ad.make_node(out, (x, W, b), back, "conv1d")


def _conv2d(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    kh, kw = W.shape[2:]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ad.ShapeError(f"input {x.shape[2:]} is smaller than kernel {(kh, kw)}")
    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))  # (B, C, H', W', kh, kw)
    out = np.einsum("bchwij,ocij->bohw", windows, W.data, optimize=True)
    out += b.data[None, :, None, None]
    H, Wd = out.shape[2:]

    def back(g):
        gW = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True) if W.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + H, j:j + Wd] += np.einsum(
                        "bohw,oc->bchw", g, W.data[:, :, i, j], optimize=True)
        return gx, gW, gb
    return ad.make_node(out, (x, W, b), back, "conv2d")


class Conv1D(Layer):
    kind = "conv1d"
    param_names = ("W", "b")

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 activation: str = "identity", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size = int(kernel_size)
        self.activation = activation
        shape = (out_channels, in_channels, kernel_size)
        self.W = Tensor(glorot_uniform(rng, shape, in_channels * kernel_size,
                                       out_channels * kernel_size), requires_grad=True)
        self.b = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ad.ShapeError(f"conv1d expects (batch, {self.in_channels}, length), got {x.shape}")
        return activate(_conv1d(x, self.W, self.b), self.activation)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "activation": self.activation}


class Conv2D(Layer):
    kind = "conv2d"
    param_names = ("W", "b")

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 activation: str = "identity", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        self.kernel_size = int(kernel_size)
        self.activation = activation
        k = self.kernel_size
        shape = (out_channels, in_channels, k, k)
        self.W = Tensor(glorot_uniform(rng, shape, in_channels * k * k, out_channels * k * k),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ad.ShapeError(f"conv2d expects (batch, {self.in_channels}, h, w), got {x.shape}")
        return activate(_conv2d(x, self.W, self.b), self.activation)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "activation": self.activation}


def _pool_windows(data: np.ndarray, pool: int, dims: int) -> np.ndarray:
    """Reshape trailing spatial axes into non-overlapping ``pool``-sized blocks."""
    spatial = data.shape[-dims:]
    if any(n < pool for n in spatial):
        raise ad.ShapeError(f"pool size {pool} exceeds input extent {spatial}")
    trimmed = tuple(slice(0, (n // pool) * pool) for n in spatial)
    cut = data[(Ellipsis,) + trimmed]
    lead = cut.shape[:-dims]
    if dims == 1:
        n = cut.shape[-1] // pool
        return cut.reshape(lead + (n, pool))
    h, w = cut.shape[-2] // pool, cut.shape[-1] // pool
    blocks = cut.reshape(lead + (h, pool, w, pool))
    blocks = np.moveaxis(blocks, -3, -2)                     # (..., h, w, pool, pool)
    return blocks.reshape(lead + (h, w, pool * pool))


def _unpool(blocks_grad: np.ndarray, in_shape, pool: int, dims: int) -> np.ndarray:
    full = np.zeros(in_shape)
    lead = in_shape[:-dims]
    if dims == 1:
        n = blocks_grad.shape[-2]
        full[..., :n * pool] = blocks_grad.reshape(lead + (n * pool,))
        return full
    h, w = blocks_grad.shape[-3:-1]
    g = blocks_grad.reshape(lead + (h, w, pool, pool))
    g = np.moveaxis(g, -2, -3).reshape(lead + (h * pool, w * pool))
    full[..., :h * pool, :w * pool] = g
    return full


def maxpool(x, pool: int, dims: int) -> Tensor:
    """Non-overlapping max pooling; gradient goes to the first maximal entry."""
    x = ad.as_tensor(x)
    blocks = _pool_windows(x.data, pool, dims)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        bg = np.zeros(blocks.shape)
        np.put_along_axis(bg, arg[..., None], g[..., None], axis=-1)
        return (_unpool(bg, x.shape, pool, dims),)
    return ad.make_node(out, (x,), back, "maxpool")


def avgpool(x, pool: int, dims: int) -> Tensor:
    x = ad.as_tensor(x)
    blocks = _pool_windows(x.data, pool, dims)
    size = blocks.shape[-1]
    out = blocks.mean(axis=-1)

    def back(g):
        bg = np.repeat(g[..., None] / size, size, axis=-1)
        return (_unpool(bg, x.shape, pool, dims),)
    return ad.make_node(out, (x,), back, "avgpool")


class _Pool(Layer):
    dims = 1
    reducer = None

    def __init__(self, pool: int = 2):
        self.pool = int(pool)

    def forward(self, x, training=False, rng=None):
        return type(self).reducer(x, self.pool, self.dims)

    def config(self):
        return {"pool": self.pool}


class MaxPool1D(_Pool):
    kind, dims, reducer = "maxpool1d", 1, staticmethod(maxpool)


class MaxPool2D(_Pool):
    kind, dims, reducer = "maxpool2d", 2, staticmethod(maxpool)


class AvgPool1D(_Pool):
    kind, dims, reducer = "avgpool1d", 1, staticmethod(avgpool)


class AvgPool2D(_Pool):
    kind, dims, reducer = "avgpool2d", 2, staticmethod(avgpool)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False, rng=None):
        return x.reshape((x.shape[0], -1))


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``."""
    x = ad.as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float = 0.2):
        self.rate = float(rate)

    def forward(self, x, training=False, rng=None):
        return dropout(x, self.rate, training, rng)

    def config(self):
        return {"rate": self.rate}


class Reshape(Layer):
    """Reshape each sample, e.g. a flat field into ``(1, n)`` channels."""

    kind = "reshape"

    def __init__(self, shape):
        self.target = tuple(int(n) for n in shape)

    def forward(self, x, training=False, rng=None):
        return x.reshape((x.shape[0],) + self.target)

    def config(self):
        return {"shape": list(self.target)}


class ParameterTable(Layer):
    """Raw trainable bottleneck values standing in for an encoder.

    The first ``n_shared`` columns hold one row shared by every sample; the
    remaining columns hold one row per sample (or a single shared row when
    ``n_rows == 1``). ``forward`` ignores the input values and returns the
    rows selected by ``index`` (all rows by default).
    """

    kind = "table"

    def __init__(self, n_rows: int, n_cols: int, n_shared: int = 0, init=None):
        self.n_rows, self.n_cols, self.n_shared = int(n_rows), int(n_cols), int(n_shared)
        if not 0 <= self.n_shared <= self.n_cols:
            raise ValueError(f"n_shared={n_shared} outside [0, {n_cols}]")
        init = np.zeros(self.n_cols) if init is None else np.asarray(init, dtype=np.float64)
        init = np.broadcast_to(init, (self.n_rows, self.n_cols))
        self.shared = Tensor(init[:1, :self.n_shared], requires_grad=True)
        self.values = Tensor(init[:, self.n_shared:], requires_grad=True)

    @property
    def param_names(self):
        return tuple(n for n, t in (("shared", self.shared), ("values", self.values)) if t.size)

    def param_shapes(self):
        return {"shared": (1, self.n_shared), "values": (self.n_rows, self.n_cols - self.n_shared)}

    def forward(self, x, training=False, rng=None, index=None):
        n = x.shape[0]
        if self.n_rows == 1:
            private = self.values
            private = ad.broadcast_to(private, (n, private.shape[1])) if private.size else None
        elif index is None:
            if n != self.n_rows:
                raise ad.ShapeError(f"table holds {self.n_rows} rows, batch has {n}")
            private = self.values
        else:
            private = self.values[np.asarray(index)]
        if not self.n_shared:
            return private
        shared = ad.broadcast_to(self.shared, (n, self.n_shared))
        return shared if private is None or not private.size else ad.concatenate(
            [shared, private], axis=1)

    def config(self):
        return {"n_rows": self.n_rows, "n_cols": self.n_cols, "n_shared": self.n_shared}


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv1D, Conv2D, MaxPool1D, MaxPool2D,
                                         AvgPool1D, AvgPool2D, Flatten, Dropout, Reshape,
                                         ParameterTable)}


class Sequential:
    """Ordered stack of layers."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __call__(self, x, training: bool = False, rng=None, index=None) -> Tensor:
        x = ad.as_tensor(x)
        for layer in self.layers:
            if isinstance(layer, ParameterTable):
                x = layer.forward(x, training, rng, index=index)
            else:
                x = layer.forward(x, training, rng)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    @property
    def is_direct(self) -> bool:
        return any(isinstance(layer, ParameterTable) for layer in self.layers)


def build_encoder(spec: str, input_shape: tuple[int, ...], n_out: int, out_activation: str = "sigmoid",
                  out_bounds=None, rng=None, dropout: float = 0.2) -> Sequential:
    """Build an encoder from a comma-separated layer spec.

    ``input_shape`` is the per-sample shape: ``(n,)`` for vectors,
    ``(channels, n)`` for 1-D signals and ``(channels, h, w)`` for images.
    Tokens:

    ``cK`` or ``cK:k``
        convolution with ``K`` filters (kernel ``k``, default 3), ReLU
    ``p`` / ``a``
        2x max / average pooling
    ``f``
        flatten
    ``dK`` / ``sK``
        dense layer of ``K`` units with ReLU / sigmoid
    ``o``
        dropout with rate ``dropout``

    A final dense layer with ``n_out`` units and ``out_activation`` is always
    appended; the input is flattened first if needed.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    shape = tuple(int(n) for n in input_shape)
    layers: list[Layer] = []
    tokens = [t.strip() for t in spec.split(",") if t.strip()] if spec else []
    for tok in tokens:
        head, arg = tok[0], tok[1:]
        if head == "c":
            if len(shape) not in (2, 3):
                raise ValueError(f"convolution '{tok}' needs a channel axis, input is {shape}")
            filters, _, k = arg.partition(":")
            k = int(k) if k else 3
            cls = Conv1D if len(shape) == 2 else Conv2D
            layers.append(cls(shape[0], int(filters), k, "relu", rng=rng))
            shape = (int(filters),) + tuple(n - k + 1 for n in shape[1:])
        elif head in "pa":
            if len(shape) not in (2, 3):
                raise ValueError(f"pooling '{tok}' needs a channel axis, input is {shape}")
            two_d = len(shape) == 3
            cls = {("p", False): MaxPool1D, ("p", True): MaxPool2D,
                   ("a", False): AvgPool1D, ("a", True): AvgPool2D}[head, two_d]
            layers.append(cls(2))
            shape = (shape[0],) + tuple(n // 2 for n in shape[1:])
        elif head == "f":
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
        elif head in "ds":
            if len(shape) != 1:
                layers.append(Flatten())
                shape = (int(np.prod(shape)),)
            layers.append(Dense(shape[0], int(arg), "relu" if head == "d" else "sigmoid", rng=rng))
            shape = (int(arg),)
        elif head == "o":
            layers.append(Dropout(dropout))
        else:
            raise ValueError(f"unknown encoder token '{tok}'")
        if any(n < 1 for n in shape):
            raise ValueError(f"encoder spec '{spec}' shrinks the input {input_shape} to nothing")
    if len(shape) != 1:
        layers.append(Flatten())
        shape = (int(np.prod(shape)),)
    layers.append(Dense(shape[0], n_out, out_activation, out_bounds, rng=rng))
    return Sequential(layers)


def _layer_from_config(kind: str, cfg: dict) -> Layer:
    cls = LAYER_TYPES.get(kind)
    if cls is None:
        raise container.ContainerError(f"unknown layer kind '{kind}'")
    if cls is Dense:
        return Dense(cfg["n_in"], cfg["n_out"], cfg["activation"], cfg.get("bounds"))
    if cls in (Conv1D, Conv2D):
        return cls(cfg["in_channels"], cfg["out_channels"], cfg["kernel_size"], cfg["activation"])
    if cls is Reshape:
        return Reshape(cfg["shape"])
    return cls(**cfg)


# ----------------------------------------------------------------------------
# losses

def loss(kind: str, pred, target) -> Tensor:
    pred, target = ad.as_tensor(pred), ad.as_tensor(target)
    if pred.shape != target.shape:
        raise ad.ShapeError(f"loss: prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    if kind == "mse":
        return ad.mean(ad.square(diff))
    if kind == "mae":
        return ad.mean(ad.absolute(diff))
    raise ValueError(f"unknown loss '{kind}'")


def mse(pred, target) -> Tensor:
    return loss("mse", pred, target)


def mae(pred, target) -> Tensor:
    return loss("mae", pred, target)


# ----------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], states: list[AdamState],
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter arrays."""
    out = []
    for p, g, s in zip(params, grads, states):
        if g.shape != p.shape or s.m.shape != p.shape:
            raise ad.ShapeError(f"adam_step: parameter {p.shape} and gradient {g.shape} differ")
        s.t += 1
        s.m = beta1 * s.m + (1.0 - beta1) * g
        s.v = beta2 * s.v + (1.0 - beta2) * g * g
        m_hat = s.m / (1.0 - beta1 ** s.t)
        v_hat = s.v / (1.0 - beta2 ** s.t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.states:
            self.states = [AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
                           for p in self.params]

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new = adam_step([p.data for p in self.params], grads, self.states,
                        self.lr, self.beta1, self.beta2, self.eps)
        for p, arr in zip(self.params, new):
            p.data = arr
            p.grad = None


# ----------------------------------------------------------------------------
# checkpoints

def checkpoint_bytes(model: Sequential, meta: dict | None = None) -> bytes:
    layers, arrays = [], {}
    for i, layer in enumerate(model.layers):
        layers.append({"kind": layer.kind, "config": layer.config(),
                       "params": list(layer.param_names)})
        for name in layer.param_names:
            arrays[f"{i}.{name}"] = getattr(layer, name).data
    return container.dumps(container.CHECKPOINT_MAGIC, arrays,
                           {"layers": layers, "model": meta or {}})


def save_checkpoint(model: Sequential, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(model, meta))
    return path


def load_checkpoint(path) -> Sequential:
    """Rebuild a model; its ``meta`` attribute holds the saved metadata."""
    return _rebuild(*container.read(path, container.CHECKPOINT_MAGIC))


def checkpoint_from_bytes(blob: bytes) -> Sequential:
    return _rebuild(*container.loads(blob, container.CHECKPOINT_MAGIC))


def _rebuild(arrays: dict, meta: dict) -> Sequential:
    layers = []
    for i, rec in enumerate(meta.get("layers", [])):
        layer = _layer_from_config(rec["kind"], rec["config"])
        expected = layer.param_shapes()
        for name in rec["params"]:
            key = f"{i}.{name}"
            if key not in arrays:
                raise container.ContainerError(f"checkpoint lacks array '{key}'")
            if arrays[key].shape != expected.get(name):
                raise container.ContainerError(
                    f"layer {i} ({rec['kind']}) parameter '{name}': declared shape "
                    f"{arrays[key].shape} does not match topology {expected.get(name)}")
            setattr(layer, name, Tensor(arrays[key], requires_grad=True))
        layers.append(layer)
    model = Sequential(layers)
    model.meta = meta.get("model", {})
    return model
