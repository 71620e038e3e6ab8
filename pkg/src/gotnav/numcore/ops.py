"""Differentiable primitives.

Fixed primitive set: matmul, add/sub, elementwise mul/div, ReLU, GELU (tanh
approximation), tanh, exp, log, softmax, layer_norm, concat, slice/reshape/
transpose, mean/sum reductions, clip, and a numerically stable
log(1 - tanh^2 u) used by squashed-Gaussian policies.

Every primitive computes with plain numpy and registers a closure returning
one gradient array per parent.  Broadcasting is supported on the elementwise
ops; gradients are summed back to the parent shapes.
"""
from __future__ import annotations

import math

import numpy as np

from .engine import DiffTensor, NumericError, record_op

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _as_tensor(x, like: DiffTensor | None = None) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    dtype = like.dtype if like is not None else None
    return DiffTensor(np.asarray(x, dtype=dtype), requires_grad=False)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> DiffTensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.values + b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op(out, (a, b), bwd, "add")


def sub(a, b) -> DiffTensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.values - b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op(out, (a, b), bwd, "sub")


def mul(a, b) -> DiffTensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.values * b.values
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)

    return record_op(out, (a, b), bwd, "mul")


def div(a, b) -> DiffTensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.values / b.values
    av, bv = a.values, b.values

    def bwd(g):
        return _unbroadcast(g / bv, a.shape), _unbroadcast(-g * av / (bv * bv), b.shape)

    return record_op(out, (a, b), bwd, "div")


def neg(a) -> DiffTensor:
    a = _as_tensor(a)
    out = -a.values

    def bwd(g):
        return (-g,)

    return record_op(out, (a,), bwd, "neg")


def matmul(a, b) -> DiffTensor:
    """Matrix product with optional broadcast batch dims; inputs must be >= 2-D."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    av, bv = a.values, b.values
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul requires >=2-D operands (use mul+sum for dot products)")

    if av.ndim > 2 and bv.ndim == 2:
        # (..., n, k) @ (k, m): collapse batch dims into one GEMM
        lead = av.shape[:-1]
        a2 = av.reshape(-1, av.shape[-1])
        out = (a2 @ bv).reshape(lead + (bv.shape[-1],))

        def bwd(g):
            g2 = np.ascontiguousarray(g).reshape(-1, g.shape[-1])
            ga = (g2 @ bv.T).reshape(av.shape)
            gb = a2.T @ g2
            return ga, gb

        return record_op(out, (a, b), bwd, "matmul")

    out = av @ bv

    def bwd(g):
        ga = g @ bv.swapaxes(-1, -2)
        gb = av.swapaxes(-1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record_op(out, (a, b), bwd, "matmul")


# ------------------------------------------------------------- nonlinearities

def relu(x) -> DiffTensor:
    x = _as_tensor(x)
    out = np.maximum(x.values, 0.0)
    mask = x.values > 0

    def bwd(g):
        return (g * mask,)

    return record_op(out, (x,), bwd, "relu")


def gelu(x) -> DiffTensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = _as_tensor(x)
    v = x.values
    v2 = v * v
    t = np.tanh(_GELU_C * (v + _GELU_A * (v2 * v)))
    out = 0.5 * v * (1.0 + t)

    def bwd(g):
        dinner = _GELU_C * (1.0 + (3.0 * _GELU_A) * v2)
        return (g * (0.5 * (1.0 + t) + (0.5 * v * dinner) * (1.0 - t * t)),)

    return record_op(out, (x,), bwd, "gelu")


def tanh(x) -> DiffTensor:
    x = _as_tensor(x)
    t = np.tanh(x.values)

    def bwd(g):
        return (g * (1.0 - t * t),)

    return record_op(t, (x,), bwd, "tanh")


def exp(x) -> DiffTensor:
    x = _as_tensor(x)
    e = np.exp(x.values)

    def bwd(g):
        return (g * e,)

    return record_op(e, (x,), bwd, "exp")


def log(x) -> DiffTensor:
    x = _as_tensor(x)
    out = np.log(x.values)
    v = x.values

    def bwd(g):
        return (g / v,)

    return record_op(out, (x,), bwd, "log")


def clip(x, lo: float, hi: float) -> DiffTensor:
    """Clamp values; gradient passes only strictly inside (lo, hi)."""
    x = _as_tensor(x)
    out = np.clip(x.values, lo, hi)
    mask = (x.values > lo) & (x.values < hi)

    def bwd(g):
        return (g * mask,)

    return record_op(out, (x,), bwd, "clip")


def tanh_squash_logdet(u) -> DiffTensor:
    """log(1 - tanh(u)^2), computed as 2*(log 2 - u - softplus(-2u)).

    Stable for |u| large, where 1 - tanh^2 underflows.  d/du = -2 tanh(u).
    """
    u = _as_tensor(u)
    v = u.values
    z = -2.0 * v
    softplus = np.where(z > 0, z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    out = 2.0 * (math.log(2.0) - v - softplus)
    t = np.tanh(v)

    def bwd(g):
        return (g * (-2.0 * t),)

    return record_op(out, (u,), bwd, "tanh_squash_logdet")


# ---------------------------------------------------------------- structured

def affine(x, w, b) -> DiffTensor:
    """Fused x @ w + b for (..., k) @ (k, m) with bias (m,)."""
    x = _as_tensor(x)
    w = _as_tensor(w, like=x)
    b = _as_tensor(b, like=x)
    xv, wv = x.values, w.values
    lead = xv.shape[:-1]
    x2 = xv.reshape(-1, xv.shape[-1])
    out = (x2 @ wv + b.values).reshape(lead + (wv.shape[-1],))

    def bwd(g):
        g2 = np.ascontiguousarray(g).reshape(-1, g.shape[-1])
        return (g2 @ wv.T).reshape(xv.shape), x2.T @ g2, g2.sum(axis=0)

    return record_op(out, (x, w, b), bwd, "affine")


def scaled_attention(q, k, v, scale: float, capture: list | None = None,
                     transform=None) -> DiffTensor:
    """Fused softmax(q k^T * scale) v over the last two axes.

    ``capture`` receives a copy of the softmax weights.  ``transform`` may
    rewrite the weight array before it multiplies ``v`` (inference only;
    rejected while a tape is active).
    """
    from .engine import active_tape

    q = _as_tensor(q)
    k = _as_tensor(k, like=q)
    v = _as_tensor(v, like=q)
    qv, kv, vv = q.values, k.values, v.values
    s = (qv @ kv.swapaxes(-1, -2)) * scale
    if np.isnan(s).any():
        raise NumericError("scaled_attention received NaN scores")
    s -= s.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    p = s
    p /= p.sum(axis=-1, keepdims=True)
    if capture is not None:
        capture.append(p.copy())
    if transform is not None:
        if active_tape() is not None:
            raise RuntimeError("attention transforms are inference-only (no active tape)")
        p = np.asarray(transform(p), dtype=qv.dtype)
    out = p @ vv

    def bwd(g):
        dv = p.swapaxes(-1, -2) @ g
        dp = g @ vv.swapaxes(-1, -2)
        ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        dq = (ds @ kv) * scale
        dk = (ds.swapaxes(-1, -2) @ qv) * scale
        return dq, dk, dv

    return record_op(out, (q, k, v), bwd, "scaled_attention")


def softmax(x, axis: int = -1) -> DiffTensor:
    """Row-stochastic softmax with max-subtraction stabilization."""
    x = _as_tensor(x)
    v = x.values
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    if np.isnan(v).any():
        raise NumericError("softmax received NaN input")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)

    return record_op(p, (x,), bwd, "softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> DiffTensor:
    """Normalize over the last axis: gain * (x - mean)/sqrt(var + eps) + bias.

    Population variance (divide by n).  ``gain``/``bias`` must match the last
    extent of ``x``.
    """
    x = _as_tensor(x)
    gain = _as_tensor(gain, like=x)
    bias = _as_tensor(bias, like=x)
    if eps < 0:
        raise ValueError("layer_norm eps must be >= 0")
    d = x.values.shape[-1]
    if gain.values.shape != (d,) or bias.values.shape != (d,):
        raise ValueError(
            f"layer_norm gain/bias must have shape ({d},), "
            f"got {gain.values.shape} and {bias.values.shape}"
        )
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.values * xhat + bias.values
    gv = gain.values

    def bwd(g):
        gy = g * gv
        m1 = gy.mean(axis=-1, keepdims=True)
        m2 = (gy * xhat).mean(axis=-1, keepdims=True)
        dx = (gy - m1 - xhat * m2) * inv
        red = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=red) if red else g * xhat
        dbias = g.sum(axis=red) if red else g
        return dx, dgain, dbias

    return record_op(out, (x, gain, bias), bwd, "layer_norm")


def concat(parts, axis: int = 0) -> DiffTensor:
    parts = [_as_tensor(p) for p in parts]
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return record_op(out, tuple(parts), bwd, "concat")


def slice_(x, key) -> DiffTensor:
    """Basic (view-producing) indexing: ints, slices, tuples thereof."""
    x = _as_tensor(x)
    out = x.values[key]
    shape = x.values.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[key] = g
        return (full,)

    return record_op(np.ascontiguousarray(out), (x,), bwd, "slice")


def reshape(x, shape) -> DiffTensor:
    x = _as_tensor(x)
    out = x.values.reshape(shape)
    orig = x.values.shape

    def bwd(g):
        return (g.reshape(orig),)

    return record_op(out, (x,), bwd, "reshape")


def transpose(x, axes) -> DiffTensor:
    x = _as_tensor(x)
    out = np.ascontiguousarray(x.values.transpose(axes))
    inv = np.argsort(axes)

    def bwd(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return record_op(out, (x,), bwd, "transpose")


def sum_(x, axis=None, keepdims: bool = False) -> DiffTensor:
    x = _as_tensor(x)
    out = x.values.sum(axis=axis, keepdims=keepdims)
    shape = x.values.shape

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, shape),)

    return record_op(np.asarray(out), (x,), bwd, "sum")


def mean_(x, axis=None, keepdims: bool = False) -> DiffTensor:
    x = _as_tensor(x)
    out = x.values.mean(axis=axis, keepdims=keepdims)
    shape = x.values.shape
    n = x.values.size if axis is None else np.prod([shape[a] for a in np.atleast_1d(axis)])

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, shape) / n,)

    return record_op(np.asarray(out), (x,), bwd, "mean")
