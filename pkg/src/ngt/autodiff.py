"""Tape-based reverse-mode differentiation over the kernels in ``ngt.tensor``.

A :class:`Graph` records every operation in execution order, so the node
list is topologically sorted by construction. Each node keeps its op kind,
input nodes, static attributes and cached output, which is enough both to
run the backward pass and to replay the forward pass with perturbed
parameter values (used by :func:`grad_check`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from . import tensor as T


class GradCheckError(RuntimeError):
    """The graph cannot be checked against finite differences."""


@dataclass(eq=False)
class Node:
    index: int
    op: str
    inputs: tuple
    attrs: dict
    value: np.ndarray
    cache: object = None
    name: str | None = None
    requires_grad: bool = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node #{self.index} {self.op}{label} shape={self.shape}>"


@dataclass
class Op:
    forward: Callable
    backward: Callable


OPS: dict[str, Op] = {}


def register(name: str, forward: Callable, backward: Callable) -> None:
    OPS[name] = Op(forward, backward)


class Graph:
    """Recorded computation. Confined to one thread while in use."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _push(self, op, inputs, attrs, value, cache=None, name=None, requires_grad=False):
        node = Node(len(self.nodes), op, tuple(inputs), attrs, value, cache, name, requires_grad)
        self.nodes.append(node)
        return node

    def param(self, name: str, value) -> Node:
        """Register a trainable leaf. Re-registering a name returns the same node."""
        if name in self.params:
            return self.params[name]
        node = self._push("param", (), {}, T.as_tensor(value), name=name, requires_grad=True)
        self.params[name] = node
        return node

    def const(self, value) -> Node:
        return self._push("const", (), {}, T.as_tensor(value))

    def apply(self, op: str, *inputs: Node, **attrs) -> Node:
        value, cache = OPS[op].forward([n.value for n in inputs], **attrs)
        return self._push(op, inputs, attrs, value, cache,
                          requires_grad=any(n.requires_grad for n in inputs))

    @property
    def stochastic(self) -> bool:
        """True when replaying would redraw random numbers."""
        return any(n.op == "dropout" and not n.attrs.get("frozen", True) for n in self.nodes)

    def replay(self, overrides: dict[str, np.ndarray] | None = None,
               upto: Node | None = None, dtype=np.float64) -> list[np.ndarray]:
        """Re-run the recorded forward pass, substituting parameter values.

        ``dtype=np.longdouble`` evaluates every leaf in extended precision.
        """
        overrides = overrides or {}
        values: list[np.ndarray] = []
        stop = len(self.nodes) if upto is None else upto.index + 1
        for node in self.nodes[:stop]:
            if node.op == "param":
                values.append(np.asarray(overrides.get(node.name, node.value), dtype=dtype))
            elif node.op == "const":
                values.append(np.asarray(node.value, dtype=dtype))
            else:
                out, _ = OPS[node.op].forward([values[n.index] for n in node.inputs], **node.attrs)
                values.append(out)
        return values


def backward(g: Graph, loss: Node) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` for every parameter it depends on."""
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads: list = [None] * (loss.index + 1)
    grads[loss.index] = np.ones_like(loss.value)
    for node in reversed(g.nodes[: loss.index + 1]):
        gy = grads[node.index]
        if gy is None or not node.inputs:
            continue
        in_grads = OPS[node.op].backward(
            gy, [n.value for n in node.inputs], node.value, node.cache, **node.attrs
        )
        for parent, gx in zip(node.inputs, in_grads):
            if gx is None or not parent.requires_grad:
                continue
            if grads[parent.index] is None:
                grads[parent.index] = gx
            else:
                grads[parent.index] = grads[parent.index] + gx
    return {
        name: grads[node.index]
        for name, node in g.params.items()
        if node.index <= loss.index and grads[node.index] is not None
    }


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = T.as_tensor(x).copy()
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x))
        flat[i] = orig - eps
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    coords: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def worst(self, n: int = 5) -> list[tuple[str, float]]:
        return sorted(self.errors.items(), key=lambda kv: -kv[1])[:n]


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    g: Graph,
    loss: Node,
    tolerance: float = 1e-4,
    eps: float = 1e-5,
    max_coords: int = 64,
    seed: int = 0,
    extended: bool = True,
) -> GradCheckReport:
    """Compare :func:`backward` against central differences on sampled coordinates.

    At most ``max_coords`` coordinates per parameter tensor are checked,
    drawn with a seeded generator. Dropout masks recorded in the graph are
    reused on every replay.

    With ``extended`` the perturbed forward passes run in ``longdouble``, so
    the numeric side resolves gradients that are zero by symmetry (attention
    key biases) instead of returning float64 roundoff divided by ``2 * eps``.
    """
    if g.stochastic:
        raise GradCheckError("graph contains unfrozen dropout; finite differences would be noise")
    analytic = backward(g, loss)
    rng = np.random.default_rng(seed)
    dtype = np.longdouble if extended else np.float64
    report = GradCheckReport(tolerance)
    for name, node in g.params.items():
        if name not in analytic:
            continue
        base = np.asarray(node.value, dtype=dtype)
        size = base.size
        picks = np.sort(rng.choice(size, size=min(size, max_coords), replace=False))
        worst = 0.0
        for i in picks:
            pert = base.copy().reshape(-1)
            pert[i] = base.flat[i] + eps
            hi = g.replay({name: pert.reshape(base.shape)}, loss, dtype)[-1]
            pert[i] = base.flat[i] - eps
            lo = g.replay({name: pert.reshape(base.shape)}, loss, dtype)[-1]
            numeric = float((hi - lo) / (2 * eps))
            worst = max(worst, relative_error(analytic[name].flat[i], numeric))
        report.errors[name] = worst
        report.coords[name] = len(picks)
    return report


# ---------------------------------------------------------------- op table


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    grad = grad.sum(axis=tuple(range(extra))) if extra else grad
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _swap(x):
    return np.swapaxes(x, -1, -2)


register(
    "add",
    lambda v: (T.add(v[0], v[1]), None),
    lambda gy, v, out, c: (_unbroadcast(gy, v[0].shape), _unbroadcast(gy, v[1].shape)),
)
register(
    "hadamard",
    lambda v: (T.hadamard(v[0], v[1]), None),
    lambda gy, v, out, c: (gy * v[1], gy * v[0]),
)
register(
    "scale",
    lambda v, factor: (T.scale(v[0], factor), None),
    lambda gy, v, out, c, factor: (gy * factor,),
)


def _matmul_bwd(gy, v, out, c):
    a, b = v
    ga = np.matmul(gy, _swap(b))
    if b.ndim == 2:
        gb = np.matmul(a.reshape(-1, a.shape[-1]).T, gy.reshape(-1, gy.shape[-1]))
    else:
        gb = np.matmul(_swap(a), gy)
    return ga, gb


register("matmul", lambda v: (T.matmul(v[0], v[1]), None), _matmul_bwd)
register(
    "transpose",
    lambda v, axes: (T.transpose(v[0], axes), None),
    lambda gy, v, out, c, axes: (T.transpose(gy, tuple(np.argsort(axes))),),
)
register(
    "reshape",
    lambda v, shape: (T.reshape(v[0], shape), None),
    lambda gy, v, out, c, shape: (gy.reshape(v[0].shape),),
)


def _slice_bwd(gy, v, out, c, axis, start, stop):
    gx = np.zeros_like(v[0])
    index = [slice(None)] * gx.ndim
    index[axis] = slice(start, stop)
    gx[tuple(index)] = gy
    return (gx,)


register(
    "slice",
    lambda v, axis, start, stop: (T.slice_axis(v[0], axis, start, stop), None),
    _slice_bwd,
)


def _concat_bwd(gy, v, out, c, axis):
    bounds = np.cumsum([x.shape[axis] for x in v])[:-1]
    return tuple(np.split(gy, bounds, axis=axis))


register("concat", lambda v, axis: (T.concat(v, axis), None), _concat_bwd)
register(
    "sigmoid",
    lambda v: (T.sigmoid(v[0]), None),
    lambda gy, v, out, c: (gy * out * (1.0 - out),),
)
register(
    "tanh",
    lambda v: (T.tanh(v[0]), None),
    lambda gy, v, out, c: (gy * (1.0 - out * out),),
)


def _softmax_bwd(gy, v, out, c, axis):
    if axis in (-1, out.ndim - 1):
        return (kernels.softmax_rows_backward(out, gy),)
    y = np.ascontiguousarray(np.moveaxis(out, axis, -1))
    g = np.ascontiguousarray(np.moveaxis(gy, axis, -1))
    return (np.moveaxis(kernels.softmax_rows_backward(y, g), -1, axis),)


register("softmax", lambda v, axis: (T.softmax(v[0], axis), None), _softmax_bwd)


def _layer_norm_fwd(v, eps):
    x, gamma, beta = v
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise T.ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs input {x.shape}")
    out, xhat, rstd = kernels.layer_norm_rows(x, gamma, beta, eps)
    return out, (xhat, rstd)


def _layer_norm_bwd(gy, v, out, cache, eps):
    xhat, rstd = cache
    return kernels.layer_norm_rows_backward(gy, xhat, rstd, v[1])


register("layer_norm", _layer_norm_fwd, _layer_norm_bwd)
register(
    "gelu",
    lambda v: (T.gelu(v[0]), None),
    lambda gy, v, out, c: (kernels.gelu_backward(v[0], gy),),
)


def _dropout_fwd(v, rate, mask=None, frozen=True, rng=None):
    if mask is None:
        mask = T.dropout_mask(v[0].shape, rate, rng)
    return v[0] * mask, mask


register(
    "dropout",
    _dropout_fwd,
    lambda gy, v, out, cache, **attrs: (gy * cache,),
)


def _embed_bwd(gy, v, out, c, ids):
    table = np.zeros_like(v[0])
    np.add.at(table, ids.reshape(-1), gy.reshape(-1, table.shape[1]))
    return (table,)


register("embed", lambda v, ids: (v[0][ids], None), _embed_bwd)
register(
    "sum",
    lambda v: (np.asarray(v[0].sum()), None),
    lambda gy, v, out, c: (np.full_like(v[0], gy),),
)
register(
    "mean",
    lambda v: (np.asarray(v[0].mean()), None),
    lambda gy, v, out, c: (np.full_like(v[0], gy / v[0].size),),
)


def _bce_fwd(v, labels):
    z = v[0].reshape(-1)
    y = np.asarray(labels, dtype=z.dtype)
    # log(1 + exp(-|z|)) form avoids overflow for large logits
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return np.asarray(losses.mean()), None


def _bce_bwd(gy, v, out, c, labels):
    z = v[0]
    y = np.asarray(labels, dtype=T.DTYPE).reshape(z.shape)
    return (gy * (T.sigmoid(z) - y) / z.shape[0],)


register("bce_logits", _bce_fwd, _bce_bwd)


def _ce_fwd(v, labels):
    z = v[0]
    labels = np.asarray(labels, dtype=np.int64)
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return np.asarray(-logp[np.arange(z.shape[0]), labels].mean()), None


def _ce_bwd(gy, v, out, c, labels):
    z = v[0]
    p = T.softmax(z, axis=1)
    p[np.arange(z.shape[0]), np.asarray(labels, dtype=np.int64)] -= 1.0
    return (gy * p / z.shape[0],)


register("cross_entropy", _ce_fwd, _ce_bwd)


# ---------------------------------------------------------------- builders
# Thin helpers so model code reads like ordinary math.


def add(g: Graph, a: Node, b: Node) -> Node:
    return g.apply("add", a, b)


def hadamard(g: Graph, a: Node, b: Node) -> Node:
    return g.apply("hadamard", a, b)


def scale(g: Graph, x: Node, factor: float) -> Node:
    return g.apply("scale", x, factor=float(factor))


def matmul(g: Graph, a: Node, b: Node) -> Node:
    return g.apply("matmul", a, b)


def linear(g: Graph, x: Node, w: Node, b: Node) -> Node:
    return add(g, matmul(g, x, w), b)


def transpose(g: Graph, x: Node, axes) -> Node:
    return g.apply("transpose", x, axes=tuple(axes))


def reshape(g: Graph, x: Node, shape) -> Node:
    return g.apply("reshape", x, shape=tuple(shape))


def slice_axis(g: Graph, x: Node, axis: int, start: int, stop: int) -> Node:
    return g.apply("slice", x, axis=axis % x.value.ndim, start=start, stop=stop)


def concat(g: Graph, xs, axis: int) -> Node:
    return g.apply("concat", *xs, axis=axis)


def sigmoid(g: Graph, x: Node) -> Node:
    return g.apply("sigmoid", x)


def tanh(g: Graph, x: Node) -> Node:
    return g.apply("tanh", x)


def softmax(g: Graph, x: Node, axis: int = -1) -> Node:
    return g.apply("softmax", x, axis=axis)


def layer_norm(g: Graph, x: Node, gamma: Node, beta: Node, eps: float) -> Node:
    return g.apply("layer_norm", x, gamma, beta, eps=float(eps))


def gelu(g: Graph, x: Node) -> Node:
    return g.apply("gelu", x)


def dropout(g: Graph, x: Node, rate: float, train: bool, rng=None, frozen: bool = True) -> Node:
    """Inverted dropout. Identity (no node recorded) in eval mode or at rate 0.

    With ``frozen`` the mask drawn now is stored on the node and reused by
    replays; otherwise each replay draws a fresh mask from ``rng``.
    """
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    if frozen:
        mask = T.dropout_mask(x.shape, rate, rng)
        return g.apply("dropout", x, rate=rate, mask=mask, frozen=True)
    return g.apply("dropout", x, rate=rate, frozen=False, rng=rng)


def embed(g: Graph, table: Node, ids) -> Node:
    """Row lookup ``table[ids]``; ``ids`` is an integer array of any shape."""
    return g.apply("embed", table, ids=np.asarray(ids, dtype=np.int64))


def sum_(g: Graph, x: Node) -> Node:
    return g.apply("sum", x)


def mean(g: Graph, x: Node) -> Node:
    return g.apply("mean", x)


def bce_with_logits(g: Graph, logits: Node, labels) -> Node:
    return g.apply("bce_logits", logits, labels=np.asarray(labels))


def cross_entropy(g: Graph, logits: Node, labels) -> Node:
    return g.apply("cross_entropy", logits, labels=np.asarray(labels))
