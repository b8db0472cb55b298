"""Dense float64 kernels.

Tensors are plain C-ordered ``numpy.ndarray`` values of dtype float64
(``longdouble`` input is carried through unchanged for the gradient-check
oracle). The functions here never mutate their inputs and check the shape
contracts the model relies on; broadcasting is limited to what the encoder
needs (a bias or mask added over leading axes).
"""

from __future__ import annotations

import numpy as np

from . import kernels

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes violate a kernel's contract."""


def as_tensor(x) -> np.ndarray:
    x = np.asarray(x)
    return np.ascontiguousarray(x, dtype=np.longdouble if x.dtype == np.longdouble else DTYPE)


def _same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _check_axis(x: np.ndarray, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {x.ndim}")
    return axis % x.ndim


def hadamard(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "hadamard")
    return a * b


def add(a, b) -> np.ndarray:
    """Elementwise sum; ``b`` may broadcast against ``a`` but not enlarge it."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    if shape != a.shape and shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} both need expansion")
    return a + b


def scale(x, c: float) -> np.ndarray:
    return as_tensor(x) * float(c)


def matmul(a, b) -> np.ndarray:
    """Batched matrix product over the last two axes.

    ``b`` may be a plain 2-D matrix shared across the batch axes of ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ {a.shape} @ {b.shape}")
    return np.matmul(a, b)


def transpose(x, axes=None) -> np.ndarray:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of rank {x.ndim}")
    return np.ascontiguousarray(np.transpose(x, axes))


def reshape(x, shape) -> np.ndarray:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    return x.reshape(shape).copy()


def slice_axis(x, axis: int, start: int, stop: int) -> np.ndarray:
    x = as_tensor(x)
    axis = _check_axis(x, axis)
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] outside axis of size {x.shape[axis]}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    return x[tuple(index)].copy()


def concat(xs, axis: int) -> np.ndarray:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat of an empty list")
    axis = _check_axis(xs[0], axis)
    ref = xs[0].shape[:axis] + xs[0].shape[axis + 1:]
    for x in xs[1:]:
        if x.ndim != xs[0].ndim or x.shape[:axis] + x.shape[axis + 1:] != ref:
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}")
    return np.concatenate(xs, axis=axis)


def sigmoid(x) -> np.ndarray:
    """Logistic function, evaluated without overflow for large ``|x|``."""
    x = as_tensor(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(as_tensor(x))


def softmax(x, axis: int = -1) -> np.ndarray:
    x = as_tensor(x)
    axis = _check_axis(x, axis)
    if axis == x.ndim - 1:
        return kernels.softmax_rows(x)
    moved = np.ascontiguousarray(np.moveaxis(x, axis, -1))
    return np.ascontiguousarray(np.moveaxis(kernels.softmax_rows(moved), -1, axis))


def layer_norm(x, gamma, beta, eps: float) -> np.ndarray:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last axis of {x.shape}"
        )
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    return kernels.layer_norm_rows(x, gamma, beta, eps)[0]


def gelu(x) -> np.ndarray:
    """GELU in its exact erf form."""
    return kernels.gelu(as_tensor(x))


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x, rate: float, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x.copy()
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    return x * dropout_mask(x.shape, rate, rng)


def sum_(x, axis=None) -> np.ndarray:
    return np.asarray(as_tensor(x).sum(axis=axis))


def mean(x, axis=None) -> np.ndarray:
    return np.asarray(as_tensor(x).mean(axis=axis))


def argmax(x, axis: int = -1) -> np.ndarray:
    """Index of the maximum along ``axis``; ties go to the lowest index."""
    x = as_tensor(x)
    return np.argmax(x, axis=_check_axis(x, axis))
