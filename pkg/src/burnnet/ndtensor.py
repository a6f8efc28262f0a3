"""Dense float64 tensors, a reproducible RNG and a finite-difference gradient check.

The learning code works on plain ``numpy`` arrays for speed; :class:`Tensor`
is the parameter carrier (value plus gradient buffer) that layers and the
optimizer share.

Random numbers come from the Philox4x32-10 counter-based generator
(Salmon et al., "Parallel random numbers: as easy as 1, 2, 3", SC'11) as
shipped by ``numpy.random.Philox``.  A stream is keyed by a 64-bit seed,
optionally extended with integer "path" components through
``numpy.random.SeedSequence``; both are specified bit-for-bit, so equal
seeds give equal streams on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "NumericalError",
    "Tensor",
    "Rng",
    "tensor_elementwise",
    "matmul",
    "grad_check",
    "ravel_index",
    "unravel_index",
]


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up."""


class NumericalError(FloatingPointError):
    """Raised when a NaN or infinity shows up where finite values are required."""


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


@dataclass(eq=False)
class Tensor:
    """Row-major float64 array with an optional same-shape gradient buffer."""

    data: np.ndarray
    grad: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim == 0:
            self.data = self.data.reshape(1)
        if self.grad is not None:
            self.grad = np.ascontiguousarray(self.grad, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                raise ShapeError(
                    f"gradient shape {self.grad.shape} != data shape {self.data.shape}")

    @classmethod
    def zeros(cls, shape) -> Tensor:
        return cls(np.zeros(shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def flat(self) -> np.ndarray:
        """Row-major view of the values."""
        return self.data.reshape(-1)

    def copy(self) -> Tensor:
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())

    def check_finite(self, what: str = "tensor") -> None:
        if not np.all(np.isfinite(self.data)):
            raise NumericalError(f"{what} contains non-finite values")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


_OPS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def tensor_elementwise(op: str, a, b) -> Tensor:
    """Apply ``add``, ``sub`` or ``mul`` componentwise; no broadcasting."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}") from None
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return Tensor(fn(a, b))


def matmul(a, b) -> Tensor:
    a, b = _as_array(a), _as_array(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    return Tensor(a @ b)


def ravel_index(coords, shape) -> int:
    """Row-major flat index of ``coords`` within ``shape``."""
    return int(np.ravel_multi_index(tuple(coords), tuple(shape)))


def unravel_index(index: int, shape) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(index, tuple(shape)))


class Rng:
    """Seeded Philox4x32-10 stream.

    ``Rng(seed).child(i, j)`` derives an independent stream from the path
    ``(seed, i, j)``, so work items can be generated in any order.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence([seed, *self.path])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *path: int) -> Rng:
        return Rng(self.seed, self.path + tuple(path))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def rayleigh(self, scale=1.0, size=None):
        return self.generator.rayleigh(scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


def grad_check(f, x, eps: float = 1e-5) -> float:
    """Largest relative disagreement between an analytic and a numeric gradient.

    ``f`` is either an object with ``forward(x) -> scalar`` and
    ``backward() -> dL/dx`` or a callable returning ``(loss, dL/dx)``.
    Each coordinate is perturbed by ``±eps`` and the error is
    ``|analytic - central| / max(1, |analytic|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(_as_array(x), dtype=np.float64, copy=True)

    if hasattr(f, "forward") and hasattr(f, "backward"):
        def evaluate(v, need_grad=False):
            out = f.forward(v)
            return out, (f.backward() if need_grad else None)
    else:
        def evaluate(v, need_grad=False):
            out, g = f(v)
            return out, g

    def scalar(out) -> float:
        arr = np.asarray(out, dtype=np.float64)
        if arr.size != 1:
            raise ShapeError(f"forward must produce a scalar, got shape {arr.shape}")
        return float(arr.reshape(()))

    value, analytic = evaluate(x.copy(), need_grad=True)
    scalar(value)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ShapeError(f"backward returned {analytic.shape}, expected {x.shape}")

    flat = x.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = scalar(evaluate(x.copy())[0])
        flat[i] = orig - eps
        minus = scalar(evaluate(x.copy())[0])
        flat[i] = orig
        numeric[i] = (plus - minus) / (2 * eps)
    a = analytic.reshape(-1)
    return float(np.max(np.abs(a - numeric) / np.maximum(1.0, np.abs(a)))) if a.size else 0.0
