"""Differentiable primitives on :class:`Tensor`.

Each primitive computes its forward value with numpy, then registers a
backward closure on the active tape. Composite operations (attention, means,
row normalization) are built from primitives and need no bespoke gradients.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from ..errors import DimensionError
from .tensor import Tensor, current_tape


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def constant(value) -> Tensor:
    """A tensor that never requires grad (ground truth, masks, weights)."""
    return Tensor(np.asarray(value, dtype=np.float64))


def _apply(name, inputs, out_data, backward_fn) -> Tensor:
    tape = current_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(name, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _apply("add", (a, b), out, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _apply("sub", (a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _apply("mul", (a, b), out, backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    ad, bd = a.data, b.data

    def backward(g):
        da = _unbroadcast(g / bd, a.shape)
        db = _unbroadcast(-g * ad / (bd * bd), b.shape)
        return da, db

    return _apply("div", (a, b), out, backward)


def neg(x: Tensor) -> Tensor:
    def backward(g):
        return (-g,)

    return _apply("neg", (x,), -x.data, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _apply("relu", (x,), np.where(mask, x.data, 0.0), backward)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g):
        return (g * y,)

    return _apply("exp", (x,), y, backward)


def log(x: Tensor) -> Tensor:
    xd = x.data

    def backward(g):
        return (g / xd,)

    return _apply("log", (x,), np.log(xd), backward)


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def backward(g):
        return (g * 0.5 / y,)

    return _apply("sqrt", (x,), y, backward)


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)

    def backward(g):
        return (g * sign,)

    return _apply("abs", (x,), np.abs(x.data), backward)


def sigmoid(x: Tensor) -> Tensor:
    # Stable in both tails.
    xd = x.data
    y = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))), np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _apply("sigmoid", (x,), y, backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def tsum(x: Tensor) -> Tensor:
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g, shape),)

    return _apply("sum", (x,), x.data.sum(), backward)


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _apply("sum_axis", (x,), x.data.sum(axis=axis, keepdims=keepdims), backward)


def mean(x: Tensor) -> Tensor:
    return mul(tsum(x), constant(1.0 / x.size))


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape

    def backward(g):
        return (g.reshape(old),)

    return _apply("reshape", (x,), x.data.reshape(shape), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _apply("transpose", (x,), x.data.transpose(axes), backward)


def swap_last2(x: Tensor) -> Tensor:
    nd = x.ndim
    if nd < 2:
        raise DimensionError("swap_last2 needs rank >= 2")
    return transpose(x, tuple(range(nd - 2)) + (nd - 1, nd - 2))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = x.shape

    def backward(g):
        dx = np.zeros(shape, dtype=np.float64)
        dx[index] = g
        return (dx,)

    return _apply("slice_axis", (x,), x.data[index], backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _apply("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), backward)


def expand0(x: Tensor, n: int) -> Tensor:
    """Insert a leading axis of extent ``n`` holding n copies of x."""
    out = np.broadcast_to(x.data, (n,) + x.shape)

    def backward(g):
        return (g.sum(axis=0),)

    return _apply("expand0", (x,), out, backward)


def stack0(tensors) -> Tensor:
    return concat([reshape(t, (1,) + t.shape) for t in tensors], axis=0)


# ---------------------------------------------------------------------------
# linear algebra and attention
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Stacked matrix product: (...,m,k) @ (...,k,n).

    Either operand may be a plain 2D matrix broadcast across the other's
    batch dimensions; otherwise batch dimensions must match exactly.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"inner extents differ: {ad.shape} @ {bd.shape}")
    if ad.ndim > 2 and bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise DimensionError(f"batch extents differ: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def backward(g):
        da = db = None
        if a.requires_grad:
            da = g @ np.swapaxes(bd, -1, -2)
            if da.ndim > ad.ndim:
                da = da.sum(axis=tuple(range(da.ndim - ad.ndim)))
        if b.requires_grad:
            db = np.swapaxes(ad, -1, -2) @ g
            if db.ndim > bd.ndim:
                db = db.sum(axis=tuple(range(db.ndim - bd.ndim)))
        return da, db

    return _apply("matmul", (a, b), out, backward)


def softmax_axis(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _apply("softmax", (x,), y, backward)


def log_softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"log_softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _apply("log_softmax", (x,), y, backward)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query/key feature dims differ: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"key/value counts differ: {k.shape} vs {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = mul(matmul(q, swap_last2(k)), constant(scale))
    return matmul(softmax_axis(scores, -1), v)


def conv2d_3x3(x: Tensor, k: Tensor) -> Tensor:
    """3x3 cross-correlation of (C_in,H,W) with (C_out,C_in,3,3), padding 1."""
    if x.ndim != 3 or k.ndim != 4 or k.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d_3x3 shapes: x {x.shape}, k {k.shape}")
    if k.shape[1] != x.shape[0]:
        raise DimensionError(f"channel mismatch: input {x.shape[0]}, kernel expects {k.shape[1]}")
    xd, kd = x.data, k.data
    out = kernels.conv3x3_forward(xd, kd)

    def backward(g):
        g = np.ascontiguousarray(g)
        da = kernels.conv3x3_grad_input(kd, g) if x.requires_grad else None
        db = kernels.conv3x3_grad_kernel(xd, g) if k.requires_grad else None
        return da, db

    return _apply("conv2d_3x3", (x, k), out, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last (channel) axis to zero mean / unit variance, then affine."""
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} vs channels {c}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data
    gd = gain.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgain, dbias

    return _apply("layer_norm", (x, gain, bias), out, backward)


def normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """L2-normalize along the last axis (composite)."""
    norm = sqrt(add(sum_axis(mul(x, x), -1, keepdims=True), constant(eps)))
    return div(x, norm)
