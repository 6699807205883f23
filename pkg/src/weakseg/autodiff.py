"""Minimal reverse-mode automatic differentiation over NumPy arrays.

Covers exactly the operations the segmentation network and its losses need:
dense matmul, broadcasting arithmetic, leaky rectifier, sigmoid, log, clip,
axis max/sum, concat/reshape/broadcast, row gather, segment sum and row
softmax. Gradient accumulation follows the reverse of the construction
order, so backward passes are deterministic.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Node:
    """Record linking an op output to its inputs and gradient rule."""

    __slots__ = ("inputs", "vjp")

    def __init__(self, inputs, vjp):
        self.inputs = inputs
        self.vjp = vjp


class Tensor:
    """A NumPy array plus an optional tape node for differentiation."""

    __slots__ = ("data", "requires_grad", "node", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, " \
               f"requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    a = np.asarray(x)
    if dtype is not None and a.dtype != dtype:
        a = a.astype(dtype)
    return Tensor(a)


def _apply(data: np.ndarray, inputs, vjp) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(i.requires_grad for i in inputs):
        out.requires_grad = True
        out.node = Node(tuple(inputs), vjp)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of NumPy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    data = a.data + b.data
    return _apply(data, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                           _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    data = a.data - b.data
    return _apply(data, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                           _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, a.dtype)
    data = a.data * b.data
    return _apply(data, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                           _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    data = a.data @ b.data
    return _apply(data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = _wrap(x)
    scale = np.where(x.data > 0, x.dtype.type(1), x.dtype.type(alpha))
    return _apply(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return _apply(out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x) -> Tensor:
    x = _wrap(x)
    return _apply(np.log(x.data), (x,), lambda g: (g / x.data,))


def clip(x, lo: float, hi: float) -> Tensor:
    x = _wrap(x)
    mask = ((x.data >= lo) & (x.data <= hi)).astype(x.dtype)
    return _apply(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape ops

def max_axis(x, axis: int, keepdims: bool = False) -> Tensor:
    """Max over one axis; gradient flows to the first maximal entry."""
    x = _wrap(x)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    data = np.take_along_axis(x.data, idx, axis=axis)
    if not keepdims:
        data = np.squeeze(data, axis=axis)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros_like(x.data)
        np.put_along_axis(out, idx, gk, axis=axis)
        return (out,)

    return _apply(data, (x,), vjp)


def sum_axis(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _apply(data, (x,), vjp)


def mean(x, axis=None) -> Tensor:
    x = _wrap(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(sum_axis(x, axis=axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    return _apply(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def broadcast_to(x, shape) -> Tensor:
    x = _wrap(x)
    return _apply(np.broadcast_to(x.data, shape), (x,),
                  lambda g: (_unbroadcast(g, x.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _apply(data, tuple(ts), vjp)


def gather_rows(x, idx) -> Tensor:
    """out[...] = x[idx[...]]; duplicate indices accumulate in the gradient."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _apply(x.data[idx], (x,), vjp)


def segment_sum(x, seg_ids, num_segments: int) -> Tensor:
    """Sum rows of x into `num_segments` bins selected by seg_ids."""
    x = _wrap(x)
    seg = np.asarray(seg_ids, dtype=np.int64)
    if seg.shape != (x.shape[0],):
        raise ValueError("seg_ids must have one entry per row")
    data = np.zeros((num_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(data, seg, x.data)
    return _apply(data, (x,), lambda g: (g[seg],))


def softmax_rows(x) -> Tensor:
    """Row softmax over the last axis, max-subtracted for stability."""
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return ((g - (g * y).sum(axis=-1, keepdims=True)) * y,)

    return _apply(y, (x,), vjp)


# ---------------------------------------------------------------------------
# reverse pass

def backward(loss: Tensor) -> dict:
    """Gradients of a scalar loss for every requires-grad leaf tensor.

    Returns {leaf Tensor: gradient array} and also assigns each leaf's
    ``.grad``. Accumulation order is the reverse of construction order.
    """
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")

    topo: list = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in reversed(t.node.inputs):
                if inp.node is not None or inp.requires_grad:
                    stack.append((inp, False))

    grads = {id(loss): np.ones_like(loss.data)}
    result = {}
    for t in reversed(topo):  # topo keeps every tensor here alive, ids stable
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.requires_grad:
                g = np.ascontiguousarray(g)
                t.grad = g
                result[t] = g
            continue
        for inp, gi in zip(t.node.inputs, t.node.vjp(g)):
            if gi is None or not (inp.requires_grad or inp.node is not None):
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return result
