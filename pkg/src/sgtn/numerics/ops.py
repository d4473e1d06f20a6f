"""Differentiable primitives.

Every function takes :class:`Tensor` (or array-like) operands and returns a
Tensor whose backward closure accumulates into its parents.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .tensor import ShapeError, Tensor, _unbroadcast, as_tensor

__all__ = [
    "add", "sub", "mul", "div", "power", "matmul", "exp", "log", "sqrt",
    "tanh", "atan", "relu", "gelu", "sigmoid", "clip", "maximum", "minimum",
    "abs", "sum", "mean", "reshape", "transpose", "getitem", "concat", "stack",
    "pad", "roll", "take", "where", "softmax_lastdim", "sparse_matmul",
]


def _binary(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return a, b


# ---------------------------------------------------------------------------
# element-wise arithmetic


def add(a, b) -> Tensor:
    a, b = _binary(a, b)

    def backward(g):
        a._accum(g)
        b._accum(g)

    return Tensor._make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _binary(a, b)

    def backward(g):
        a._accum(g)
        b._accum(-g)

    return Tensor._make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary(a, b)

    def backward(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return Tensor._make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _binary(a, b)
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g / b.data)
        if b.requires_grad:
            b._accum(-g * out / b.data)

    return Tensor._make(out, (a, b), backward, "div")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p

    def backward(g):
        a._accum(g * p * a.data ** (p - 1))

    return Tensor._make(out, (a,), backward, "power")


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._make(out, (a, b), backward, "matmul")


def sparse_matmul(mat, x) -> Tensor:
    """``mat @ x`` for a constant scipy sparse ``mat`` and 2-D tensor ``x``."""
    x = as_tensor(x)
    out = np.asarray(mat @ x.data, dtype=x.dtype)
    mat_t = mat.T.tocsr()

    def backward(g):
        x._accum(np.asarray(mat_t @ g, dtype=x.dtype))

    return Tensor._make(out, (x,), backward, "sparse_matmul")


# ---------------------------------------------------------------------------
# unary functions


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * out), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(np.log(a.data), (a,), lambda g: a._accum(g / a.data), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * 0.5 / out), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: a._accum(g * (1.0 - out * out)), "tanh")


def atan(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(
        np.arctan(a.data), (a,), lambda g: a._accum(g / (1.0 + a.data * a.data)), "atan"
    )


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    return Tensor._make(np.abs(a.data), (a,), lambda g: a._accum(g * np.sign(a.data)), "abs")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return Tensor._make(a.data * pos, (a,), lambda g: a._accum(g * pos), "relu")


_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + special.erf(x * _SQRT1_2))
    out = (x * cdf).astype(x.dtype, copy=False)

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accum(g * (cdf + x * pdf))

    return Tensor._make(out, (a,), backward, "gelu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.data).astype(a.dtype, copy=False)
    return Tensor._make(out, (a,), lambda g: a._accum(g * out * (1.0 - out)), "sigmoid")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with a pass-through gradient inside ``[lo, hi]``."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._make(np.clip(a.data, lo, hi), (a,), lambda g: a._accum(g * inside), "clip")


def maximum(a, b) -> Tensor:
    a, b = _binary(a, b)
    pick_a = a.data >= b.data

    def backward(g):
        a._accum(g * pick_a)
        b._accum(g * ~pick_a)

    return Tensor._make(np.maximum(a.data, b.data), (a, b), backward, "maximum")


def minimum(a, b) -> Tensor:
    a, b = _binary(a, b)
    pick_a = a.data <= b.data

    def backward(g):
        a._accum(g * pick_a)
        b._accum(g * ~pick_a)

    return Tensor._make(np.minimum(a.data, b.data), (a, b), backward, "minimum")


def where(cond, a, b) -> Tensor:
    a, b = _binary(a, b)
    cond = np.asarray(cond, dtype=bool)

    def backward(g):
        a._accum(g * cond)
        b._accum(g * ~cond)

    return Tensor._make(np.where(cond, a.data, b.data), (a, b), backward, "where")


def softmax_lastdim(x) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the slice maximum."""
    x = as_tensor(x)
    if x.ndim == 0 or x.size == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax over an empty last dimension: {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        x._accum(out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return Tensor._make(out, (x,), backward, "softmax")


# ---------------------------------------------------------------------------
# reductions


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape))

    return Tensor._make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(src)), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._make(
        np.transpose(a.data, axes), (a,), lambda g: a._accum(np.transpose(g, inv)), "transpose"
    )


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accum(full)

    return Tensor._make(a.data[idx], (a,), backward, "getitem")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            t._accum(np.take(g, i, axis=axis))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def pad(a, widths) -> Tensor:
    """Zero padding; ``widths`` as for ``np.pad``."""
    a = as_tensor(a)
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return Tensor._make(np.pad(a.data, widths), (a,), lambda g: a._accum(g[sl]), "pad")


def roll(a, shift, axis) -> Tensor:
    a = as_tensor(a)
    neg = tuple(-s for s in shift) if isinstance(shift, tuple) else -shift
    return Tensor._make(
        np.roll(a.data, shift, axis=axis), (a,), lambda g: a._accum(np.roll(g, neg, axis=axis)), "roll"
    )


def take(a, index: np.ndarray, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with an integer index array (scatter-add backward)."""
    a = as_tensor(a)
    index = np.asarray(index)

    def backward(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + index.ndim)), list(range(index.ndim)))
        np.add.at(moved, index, gm)
        a._accum(full)

    return Tensor._make(np.take(a.data, index, axis=axis), (a,), backward, "take")
