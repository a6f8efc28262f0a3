"""Layers with hand-written backward passes, the two training losses and Adam.

All layers take batched arrays: images are ``(N, C, H, W)`` and vectors
``(N, F)``.  The functional forms (``conv2d``, ``avgpool2d`` ...) accept a
single ``(C, H, W)`` image as well.  Every layer caches what it needs during
``forward`` and accumulates parameter gradients into ``Tensor.grad`` during
``backward``; callers zero the gradients between optimizer steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ndtensor import NumericalError, Rng, ShapeError, Tensor

__all__ = [
    "conv2d", "conv2d_backward", "deconv2d", "deconv2d_backward",
    "avgpool2d", "avgpool2d_backward", "global_avg_pool", "dense",
    "relu", "sigmoid", "softmax",
    "reconstruction_loss", "reconstruction_loss_grad",
    "cross_entropy_loss", "bce_with_logits", "softmax_cross_entropy",
    "Layer", "Conv2D", "Deconv2D", "AvgPool2D", "ReLU", "Sigmoid",
    "GlobalAvgPool", "Dense", "CenterCrop", "Sequential",
    "AdamState", "adam_step", "Adam",
]


def _batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim != rank:
        raise ShapeError(f"expected rank {rank - 1} or {rank} input, got shape {x.shape}")
    return x, False


def _out_extent(n: int, k: int, s: int) -> int:
    if n < k:
        raise ShapeError(f"input extent {n} is smaller than kernel {k}")
    return (n - k) // s + 1


def _windows(x: np.ndarray, k: int, s: int, ho: int, wo: int):
    for di in range(k):
        for dj in range(k):
            yield di, dj, x[:, :, di:di + s * (ho - 1) + 1:s, dj:dj + s * (wo - 1) + 1:s]


# --------------------------------------------------------------------------
# functional forms
# --------------------------------------------------------------------------

def _im2col(x, k, s):
    n, c, h, w = x.shape
    ho, wo = _out_extent(h, k, s), _out_extent(w, k, s)
    cols = np.stack([win for _, _, win in _windows(x, k, s, ho, wo)], axis=2)
    return cols.reshape(n, c * k * k, ho * wo), ho, wo


def conv2d(x, weight, bias, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation; ``weight`` is ``(out, in, k, k)``."""
    x, single = _batched(x, 4)
    weight = np.asarray(weight, dtype=np.float64)
    o, c, k, k2 = weight.shape
    if k != k2 or x.shape[1] != c:
        raise ShapeError(f"weight {weight.shape} does not fit input {x.shape}")
    y, _ = _conv_forward(x, weight, bias, stride)
    return y[0] if single else y


def _conv_forward(x, weight, bias, stride):
    o, k = weight.shape[0], weight.shape[2]
    cols, ho, wo = _im2col(x, k, stride)
    y = np.matmul(weight.reshape(o, -1), cols) + np.asarray(bias)[None, :, None]
    return y.reshape(x.shape[0], o, ho, wo), cols


def conv2d_backward(dy, x, weight, stride: int = 1, cols=None):
    """Return ``(dx, dweight, dbias)`` for :func:`conv2d`.

    ``cols`` is the im2col buffer from the forward pass, if kept.
    """
    x, single = _batched(x, 4)
    dy, _ = _batched(dy, 4)
    o, c, k, _ = weight.shape
    n, _, h, w = x.shape
    ho, wo = dy.shape[2], dy.shape[3]
    if cols is None:
        cols, ho, wo = _im2col(x, k, stride)
    dyr = dy.reshape(n, o, ho * wo)
    dw = np.tensordot(dyr, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
    db = dyr.sum(axis=(0, 2))
    dcols = np.matmul(weight.reshape(o, -1).T, dyr).reshape(n, c, k, k, ho, wo)
    dx = np.zeros_like(x)
    s = stride
    for di in range(k):
        for dj in range(k):
            dx[:, :, di:di + s * (ho - 1) + 1:s, dj:dj + s * (wo - 1) + 1:s] += dcols[:, :, di, dj]
    return (dx[0] if single else dx), dw, db


def deconv2d(x, weight, bias, stride: int = 2) -> np.ndarray:
    """Transposed convolution with kernel == stride, so output blocks never overlap.

    ``weight`` is ``(out, in, k, k)``; each input pixel ``v`` writes
    ``v * weight[:, :, di, dj]`` into its own ``k x k`` output block.
    """
    x, single = _batched(x, 4)
    weight = np.asarray(weight, dtype=np.float64)
    o, c, k, _ = weight.shape
    if stride != k:
        raise ValueError(f"deconv2d requires stride == kernel ({k}), got stride {stride}")
    if x.shape[1] != c:
        raise ShapeError(f"weight {weight.shape} does not fit input {x.shape}")
    n, _, h, w = x.shape
    wt = weight.transpose(2, 3, 0, 1).reshape(k * k * o, c)
    z = np.matmul(wt, x.reshape(n, c, h * w)).reshape(n, k, k, o, h, w)
    y = z.transpose(0, 3, 4, 1, 5, 2).reshape(n, o, h * k, w * k)
    y = y + np.asarray(bias)[None, :, None, None]
    return y[0] if single else y


def deconv2d_backward(dy, x, weight, stride: int = 2):
    x, single = _batched(x, 4)
    dy, _ = _batched(dy, 4)
    o, c, k, _ = weight.shape
    n, _, h, w = x.shape
    dz = dy.reshape(n, o, h, k, w, k).transpose(0, 3, 5, 1, 2, 4).reshape(n, k * k * o, h * w)
    xr = x.reshape(n, c, h * w)
    dwt = np.tensordot(dz, xr, axes=([0, 2], [0, 2]))
    dw = dwt.reshape(k, k, o, c).transpose(2, 3, 0, 1)
    wt = weight.transpose(2, 3, 0, 1).reshape(k * k * o, c)
    dx = np.matmul(wt.T, dz).reshape(n, c, h, w)
    db = dy.sum(axis=(0, 2, 3))
    return (dx[0] if single else dx), dw, db


def avgpool2d(x, kernel: int = 2, stride: int = 1) -> np.ndarray:
    x, single = _batched(x, 4)
    ho = _out_extent(x.shape[2], kernel, stride)
    wo = _out_extent(x.shape[3], kernel, stride)
    y = sum(win for _, _, win in _windows(x, kernel, stride, ho, wo)) / (kernel * kernel)
    return y[0] if single else y


def avgpool2d_backward(dy, input_shape, kernel: int = 2, stride: int = 1) -> np.ndarray:
    dy, single = _batched(dy, 4)
    shape = tuple(input_shape)
    if len(shape) == 3:
        shape = (1,) + shape
    dx = np.zeros(shape)
    ho, wo = dy.shape[2], dy.shape[3]
    s, share = stride, dy / (kernel * kernel)
    for di in range(kernel):
        for dj in range(kernel):
            dx[:, :, di:di + s * (ho - 1) + 1:s, dj:dj + s * (wo - 1) + 1:s] += share
    return dx[0] if single else dx


def global_avg_pool(x) -> np.ndarray:
    x, single = _batched(x, 4)
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError("global_avg_pool needs a positive spatial extent")
    y = x.mean(axis=(2, 3))
    return y[0] if single else y


def dense(x, weight, bias) -> np.ndarray:
    x, single = _batched(x, 2)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != x.shape[1] or np.shape(bias) != (weight.shape[0],):
        raise ShapeError(f"dense: input {x.shape}, weight {weight.shape}, bias {np.shape(bias)}")
    y = x @ weight.T + bias
    return y[0] if single else y


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(x, axis: int = -1):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 1:
        raise ShapeError("softmax needs at least one logit")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def _same_shape(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def reconstruction_loss(x, z) -> float:
    """L1 plus squared L2 distance between target ``x`` and reconstruction ``z``."""
    x, z = _same_shape(x, z)
    d = x - z
    return float(np.abs(d).sum() + (d * d).sum())


def reconstruction_loss_grad(x, z) -> np.ndarray:
    """Gradient of :func:`reconstruction_loss` w.r.t. ``z``; ``d|u|/du`` is 0 at 0."""
    x, z = _same_shape(x, z)
    d = z - x
    return np.sign(d) + 2.0 * d


_CLAMP = 1e-12


def cross_entropy_loss(target, pred) -> float:
    """Cross-entropy on probabilities, averaged over samples.

    Binary: ``target`` holds 0/1 labels and ``pred`` the positive-class
    probabilities (same shape).  Multiclass: ``target`` holds class indices
    and ``pred`` is ``(N, K)`` (or ``(K,)`` for a single sample).
    """
    pred = np.clip(np.asarray(pred, dtype=np.float64), _CLAMP, 1.0 - _CLAMP)
    target = np.asarray(target)
    if pred.ndim >= 1 and pred.shape[-1] > 1 and target.shape != pred.shape:
        probs = pred[None] if pred.ndim == 1 else pred
        idx = np.atleast_1d(target).astype(np.int64)
        if idx.shape[0] != probs.shape[0]:
            raise ShapeError("one target per sample required")
        if np.any(idx < 0) or np.any(idx >= probs.shape[1]) or np.any(idx != np.atleast_1d(target)):
            raise ValueError(f"invalid class index in {target!r}")
        return float(-np.log(probs[np.arange(len(idx)), idx]).mean())
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        t = np.broadcast_to(t, pred.shape) if t.size == 1 else t
    if np.any((t != 0) & (t != 1)):
        raise ValueError("binary targets must be 0 or 1")
    return float(-(t * np.log(pred) + (1 - t) * np.log(1 - pred)).mean())


def bce_with_logits(target, logits):
    """Binary cross-entropy of ``sigmoid(logits)``; returns ``(mean loss, dL/dlogits)``."""
    t, z = _same_shape(target, logits)
    loss = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean()), (sigmoid(z) - t) / z.size


def softmax_cross_entropy(target, logits):
    """Multiclass cross-entropy of ``softmax(logits)``; returns ``(mean loss, dL/dlogits)``."""
    z = np.asarray(logits, dtype=np.float64)
    idx = np.asarray(target, dtype=np.int64)
    n, k = z.shape
    if idx.shape != (n,) or np.any(idx < 0) or np.any(idx >= k):
        raise ValueError("targets must be one class index in [0, K) per sample")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), idx].mean()
    grad = np.exp(logp)
    grad[np.arange(n), idx] -= 1.0
    return float(loss), grad / n


# --------------------------------------------------------------------------
# layer objects
# --------------------------------------------------------------------------

class Layer:
    """Base class: parameter-free identity."""

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def _param(values: np.ndarray) -> Tensor:
    return Tensor(values, np.zeros_like(values))


def _he_uniform(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2D(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 2,
                 stride: int = 1, rng: Rng | None = None):
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride = kernel, stride
        shape = (out_channels, in_channels, kernel, kernel)
        fan_in = in_channels * kernel * kernel
        w = _he_uniform(rng, shape, fan_in) if rng is not None else np.zeros(shape)
        self.weight = _param(w)
        self.bias = _param(np.zeros(out_channels))
        self._x = self._cols = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x):
        self._x = x
        y, self._cols = _conv_forward(x, self.weight.data, self.bias.data, self.stride)
        return y

    def backward(self, dy):
        dx, dw, db = conv2d_backward(dy, self._x, self.weight.data, self.stride, self._cols)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        c, h, w = shape
        return (self.out_channels, _out_extent(h, self.kernel, self.stride),
                _out_extent(w, self.kernel, self.stride))

    def __repr__(self):
        return (f"Conv2D({self.in_channels}->{self.out_channels}, "
                f"k={self.kernel}, s={self.stride})")


class Deconv2D(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 2,
                 stride: int = 2, rng: Rng | None = None):
        if stride != kernel:
            raise ValueError("Deconv2D supports stride == kernel only")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel = self.stride = kernel
        shape = (out_channels, in_channels, kernel, kernel)
        w = _he_uniform(rng, shape, in_channels) if rng is not None else np.zeros(shape)
        self.weight = _param(w)
        self.bias = _param(np.zeros(out_channels))
        self._x = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x):
        self._x = x
        return deconv2d(x, self.weight.data, self.bias.data, self.stride)

    def backward(self, dy):
        dx, dw, db = deconv2d_backward(dy, self._x, self.weight.data, self.stride)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        c, h, w = shape
        return (self.out_channels, h * self.stride, w * self.stride)

    def __repr__(self):
        return f"Deconv2D({self.in_channels}->{self.out_channels}, k={self.kernel}, s={self.stride})"


class AvgPool2D(Layer):
    def __init__(self, kernel: int = 2, stride: int = 1):
        self.kernel, self.stride = kernel, stride
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return avgpool2d(x, self.kernel, self.stride)

    def backward(self, dy):
        return avgpool2d_backward(dy, self._shape, self.kernel, self.stride)

    def output_shape(self, shape):
        c, h, w = shape
        return (c, _out_extent(h, self.kernel, self.stride), _out_extent(w, self.kernel, self.stride))


class ReLU(Layer):
    """Rectifier.  With ``guided`` set, backward also drops negative incoming gradients."""

    def __init__(self):
        self.guided = False
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        if self.guided:
            return np.where(self._mask & (dy > 0), dy, 0.0)
        return np.where(self._mask, dy, 0.0)


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class GlobalAvgPool(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return global_avg_pool(x)

    def backward(self, dy):
        n, c, h, w = self._shape
        return np.broadcast_to(dy[:, :, None, None] / (h * w), self._shape).copy()

    def output_shape(self, shape):
        return (shape[0],)


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: Rng | None = None):
        self.in_features, self.out_features = in_features, out_features
        shape = (out_features, in_features)
        w = _he_uniform(rng, shape, in_features) if rng is not None else np.zeros(shape)
        self.weight = _param(w)
        self.bias = _param(np.zeros(out_features))
        self._x = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x):
        self._x = x
        return dense(x, self.weight.data, self.bias.data)

    def backward(self, dy):
        self.weight.grad += dy.T @ self._x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data

    def output_shape(self, shape):
        return (self.out_features,)

    def __repr__(self):
        return f"Dense({self.in_features}->{self.out_features})"


class CenterCrop(Layer):
    """Crop the spatial axes to ``(rows, cols)`` around the centre (floor offsets)."""

    def __init__(self, rows: int, cols: int):
        self.rows, self.cols = rows, cols
        self._shape = None

    def _offsets(self, h, w):
        if h < self.rows or w < self.cols:
            raise ShapeError(f"cannot crop {h}x{w} to {self.rows}x{self.cols}")
        return (h - self.rows) // 2, (w - self.cols) // 2

    def forward(self, x):
        self._shape = x.shape
        r0, c0 = self._offsets(x.shape[2], x.shape[3])
        return x[:, :, r0:r0 + self.rows, c0:c0 + self.cols]

    def backward(self, dy):
        dx = np.zeros(self._shape)
        r0, c0 = self._offsets(self._shape[2], self._shape[3])
        dx[:, :, r0:r0 + self.rows, c0:c0 + self.cols] = dy
        return dx

    def output_shape(self, shape):
        self._offsets(shape[1], shape[2])
        return (shape[0], self.rows, self.cols)

    def __repr__(self):
        return f"CenterCrop({self.rows}x{self.cols})"


class Sequential(Layer):
    """Layers applied in order.  ``forward`` keeps every intermediate output."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        self.outputs: list[np.ndarray] = []

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", t) for name, t in layer.params())
        return out

    def forward(self, x):
        self.outputs = []
        for layer in self.layers:
            x = layer.forward(x)
            self.outputs.append(x)
        return x

    def backward(self, dy, stop: int = 0):
        """Backpropagate through ``layers[stop:]``; returns the gradient at the input of ``layers[stop]``."""
        for layer in reversed(self.layers[stop:]):
            dy = layer.backward(dy)
        return dy

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def zero_grad(self):
        for _, t in self.params():
            t.zero_grad()

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def __repr__(self):
        inner = ", ".join(repr(layer) for layer in self.layers)
        return f"Sequential([{inner}])"


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeError("one gradient per parameter required")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {i} at step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** state.t, 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


class Adam:
    """Adam over a list of :class:`Tensor` parameters, reading their ``grad`` buffers."""

    def __init__(self, params: list[Tensor], lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, epsilon)

    def step(self):
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
