"""Differentiable operators with hand-written backward passes.

Every operator is a ``*_forward`` / ``*_backward`` pair. The forward returns
``(out, cache)``; the backward takes the upstream gradient and the cache and
returns the gradients of the inputs. Parameter sets are plain dicts of arrays,
and their gradients come back as dicts with the same keys. All operators
work at whatever float precision their inputs carry.
"""
from __future__ import annotations

import math

import numpy as np

from ._im2col import out_size, window_view

__all__ = [
    "LEAKY_SLOPE",
    "conv2d_forward",
    "conv2d_backward",
    "conv_transpose_forward",
    "conv_transpose_backward",
    "weight_norm_forward",
    "weight_norm_backward",
    "instance_norm_forward",
    "instance_norm_backward",
    "leaky_relu_forward",
    "leaky_relu_backward",
    "dropout_forward",
    "dropout_backward",
    "sigmoid",
    "init_se_params",
    "init_se_attention_params",
    "se_block_forward",
    "se_block_backward",
    "se_attention_forward",
    "se_attention_backward",
    "charbonnier_loss",
    "effective_reduction",
    "MAX_ATTENTION_POSITIONS",
]

LEAKY_SLOPE = 0.01
MAX_ATTENTION_POSITIONS = 4096


# -- convolution -------------------------------------------------------------

def conv2d_forward(x, w, b=None, stride: int = 1, dilation: int = 1, pad: int = 0):
    """Cross-correlation of (n, ci, h, w) with (co, ci, kh, kw) weights."""
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    if ci != ci_w:
        raise ValueError(f"conv2d: input has {ci} channels, weights expect {ci_w}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d: kernels must have odd size")
    oh, ow = out_size(h, kh, stride, dilation, pad), out_size(wd, kw, stride, dilation, pad)
    if oh < 1 or ow < 1:
        raise ValueError("conv2d: output would be empty")
    xpad = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    view = window_view(xpad, kh, kw, stride, dilation)
    out = np.tensordot(view, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.reshape(1, co, 1, 1)
    cache = (x.shape, xpad, w, b is not None, stride, dilation, pad)
    return np.ascontiguousarray(out), cache


def conv2d_backward(dout, cache):
    """Returns (dx, dw, db); db is None when the forward had no bias."""
    x_shape, xpad, w, has_bias, stride, dilation, pad = cache
    co, ci, kh, kw = w.shape
    view = window_view(xpad, kh, kw, stride, dilation)
    dw = np.tensordot(dout, view, axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    dxpad = np.zeros(xpad.shape, dtype=np.result_type(dout, w))
    oh, ow = dout.shape[2], dout.shape[3]
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(dout, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            r0, c0 = i * dilation, j * dilation
            dxpad[:, :, r0 : r0 + stride * (oh - 1) + 1 : stride, c0 : c0 + stride * (ow - 1) + 1 : stride] += contrib
    h, wd = x_shape[2], x_shape[3]
    dx = dxpad[:, :, pad : pad + h, pad : pad + wd] if pad else dxpad
    return dx, dw, db


def conv_transpose_forward(x, w, b=None):
    """Non-overlapping transposed convolution (stride equal to kernel size).

    ``w`` has shape (co, ci, k, k); each input pixel expands to a k x k patch.
    """
    n, ci, h, wd = x.shape
    co, ci_w, k, k2 = w.shape
    if ci != ci_w or k != k2:
        raise ValueError(f"conv_transpose: weights {w.shape} do not fit input {x.shape}")
    out = np.tensordot(w, x, axes=([1], [1])).transpose(3, 0, 4, 1, 5, 2).reshape(n, co, h * k, wd * k)
    if b is not None:
        out = out + b.reshape(1, co, 1, 1)
    return out, (x, w, b is not None)


def conv_transpose_backward(dout, cache):
    x, w, has_bias = cache
    n, ci, h, wd = x.shape
    co, _, k, _ = w.shape
    d6 = dout.reshape(n, co, h, k, wd, k)
    dx = np.tensordot(d6, w, axes=([1, 3, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
    dw = np.tensordot(d6, x, axes=([0, 2, 4], [0, 2, 3])).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3)) if has_bias else None
    return dx, dw, db


# -- weight normalization ------------------------------------------------------

def weight_norm_forward(v, g):
    """w = g * v / ||v||, the norm taken over each output channel's fan-in."""
    axes = tuple(range(1, v.ndim))
    norm = np.sqrt(np.sum(v * v, axis=axes, keepdims=True))
    if np.any(norm == 0):
        raise ValueError("weight_norm: an output channel has zero norm")
    shape = (-1,) + (1,) * (v.ndim - 1)
    w = g.reshape(shape) * v / norm
    return w, (v, g, norm)


def weight_norm_backward(dw, cache):
    v, g, norm = cache
    axes = tuple(range(1, v.ndim))
    shape = (-1,) + (1,) * (v.ndim - 1)
    vhat = v / norm
    proj = np.sum(dw * vhat, axis=axes, keepdims=True)
    dg = proj.reshape(g.shape)
    dv = g.reshape(shape) / norm * (dw - proj * vhat)
    return dv, dg


# -- normalization and pointwise ------------------------------------------------

def instance_norm_forward(x, gamma, beta, eps: float = 1e-5):
    n, c, h, w = x.shape
    if h * w < 2:
        raise ValueError("instance_norm needs at least 2 spatial positions")
    mu = x.mean(axis=(2, 3), keepdims=True)
    var = x.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    out = xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)
    return out, (xhat, inv_std, gamma)


def instance_norm_backward(dout, cache):
    xhat, inv_std, gamma = cache
    c = gamma.shape[0]
    m = xhat.shape[2] * xhat.shape[3]
    dgamma = np.sum(dout * xhat, axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(1, c, 1, 1)
    dx = inv_std / m * (
        m * dxhat
        - dxhat.sum(axis=(2, 3), keepdims=True)
        - xhat * np.sum(dxhat * xhat, axis=(2, 3), keepdims=True)
    )
    return dx, dgamma, dbeta


def leaky_relu_forward(x, slope: float = LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x), (x > 0, slope)


def leaky_relu_backward(dout, cache):
    positive, slope = cache
    return np.where(positive, dout, slope * dout)


def dropout_forward(x, p: float, seed: int, training: bool):
    """Inverted dropout driven by a counter-based (Philox) generator.

    The mask depends only on ``seed`` and the tensor shape, never on thread
    scheduling. Eval mode returns the input object unchanged.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    u = np.random.Generator(np.random.Philox(key=seed)).random(x.shape)
    mask = (u >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * mask, mask


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- squeeze-excitation ----------------------------------------------------------

def effective_reduction(channels: int, reduction: int) -> int:
    """Largest divisor of ``channels`` not exceeding ``reduction``."""
    r = max(1, min(reduction, channels))
    while channels % r:
        r -= 1
    return r


def init_se_params(channels: int, reduction: int = 16, rng=None, dtype=np.float64) -> dict:
    rng = np.random.default_rng(rng)
    hidden = channels // effective_reduction(channels, reduction)
    return {
        "w1": (rng.standard_normal((channels, hidden)) * math.sqrt(2.0 / channels)).astype(dtype),
        "b1": np.zeros(hidden, dtype=dtype),
        "w2": (rng.standard_normal((hidden, channels)) * math.sqrt(1.0 / hidden)).astype(dtype),
        "b2": np.zeros(channels, dtype=dtype),
    }


def se_block_forward(x, p: dict, slope: float = LEAKY_SLOPE):
    """Channel recalibration: y = x * sigmoid(W2 leaky(W1 avgpool(x)))."""
    if x.shape[1] != p["w1"].shape[0]:
        raise ValueError(f"se_block: input has {x.shape[1]} channels, params expect {p['w1'].shape[0]}")
    z = x.mean(axis=(2, 3))
    a = z @ p["w1"] + p["b1"]
    hid = np.where(a > 0, a, slope * a)
    s = sigmoid(hid @ p["w2"] + p["b2"])
    y = x * s[:, :, None, None]
    return y, (x, z, a, hid, s, slope, p)


def se_block_backward(dy, cache):
    x, z, a, hid, s, slope, p = cache
    ds = np.sum(dy * x, axis=(2, 3))
    dx = dy * s[:, :, None, None]
    du = ds * s * (1.0 - s)
    grads = {"w2": hid.T @ du, "b2": du.sum(axis=0)}
    da = (du @ p["w2"].T) * np.where(a > 0, 1.0, slope)
    grads["w1"] = z.T @ da
    grads["b1"] = da.sum(axis=0)
    dz = da @ p["w1"].T
    dx = dx + dz[:, :, None, None] / (x.shape[2] * x.shape[3])
    return dx, grads


def init_se_attention_params(channels: int, reduction: int = 16, rng=None, dtype=np.float64,
                             attn_scale: float = 0.02) -> dict:
    rng = np.random.default_rng(rng)
    p = init_se_params(channels, reduction, rng, dtype)
    p["qkv_w"] = (rng.standard_normal((3 * channels, channels)) * attn_scale).astype(dtype)
    p["out_w"] = (rng.standard_normal((channels, channels)) * attn_scale).astype(dtype)
    p["out_b"] = np.zeros(channels, dtype=dtype)
    return p


def se_attention_forward(x, p: dict, slope: float = LEAKY_SLOPE):
    """y = x + se_block(x) + out_conv(softmax(Q^T K / sqrt(C)) V).

    Q, K and V come from one bias-free 1x1 convolution: a key bias cancels in
    the per-query softmax and a value bias is absorbed by the output bias.
    Attention runs over all spatial positions.
    """
    n, c, h, w = x.shape
    npos = h * w
    if npos > MAX_ATTENTION_POSITIONS:
        raise ValueError(f"se_attention: {npos} positions exceed the {MAX_ATTENTION_POSITIONS} limit")
    if p["qkv_w"].shape != (3 * c, c):
        raise ValueError(f"se_attention: qkv weights {p['qkv_w'].shape} do not fit {c} channels")
    se_out, se_cache = se_block_forward(x, p, slope)
    xf = x.reshape(n, c, npos)
    qkv = p["qkv_w"] @ xf
    q, k, v = qkv[:, :c], qkv[:, c : 2 * c], qkv[:, 2 * c :]
    scale = 1.0 / math.sqrt(c)
    scores = (q.transpose(0, 2, 1) @ k) * scale
    scores -= scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)
    o = v @ attn.transpose(0, 2, 1)
    att_out = p["out_w"] @ o + p["out_b"][None, :, None]
    y = x + se_out + att_out.reshape(n, c, h, w)
    cache = {"se": se_cache, "xf": xf, "q": q, "k": k, "v": v, "attn": attn, "o": o, "scale": scale, "p": p}
    return y, cache


def se_attention_backward(dy, cache):
    p = cache["p"]
    n, c, h, w = dy.shape
    dx_se, grads = se_block_backward(dy, cache["se"])
    d_att = dy.reshape(n, c, h * w)
    o, attn, q, k, v, xf = cache["o"], cache["attn"], cache["q"], cache["k"], cache["v"], cache["xf"]
    grads["out_w"] = np.sum(d_att @ o.transpose(0, 2, 1), axis=0)
    grads["out_b"] = d_att.sum(axis=(0, 2))
    do = p["out_w"].T @ d_att
    dattn = do.transpose(0, 2, 1) @ v
    dv = do @ attn
    dscores = attn * (dattn - np.sum(dattn * attn, axis=2, keepdims=True)) * cache["scale"]
    dq = k @ dscores.transpose(0, 2, 1)
    dk = q @ dscores
    dqkv = np.concatenate([dq, dk, dv], axis=1)
    grads["qkv_w"] = np.sum(dqkv @ xf.transpose(0, 2, 1), axis=0)
    dx = dy + dx_se + (p["qkv_w"].T @ dqkv).reshape(n, c, h, w)
    return dx, grads


# -- loss --------------------------------------------------------------------------

def charbonnier_loss(pred, target, eps: float = 1e-3):
    """Mean of sqrt((pred - target)^2 + eps^2) and its gradient w.r.t. ``pred``."""
    if eps <= 0:
        raise ValueError("charbonnier eps must be positive")
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"charbonnier: shape mismatch {pred.shape} vs {target.shape}")
    d = pred - target
    root = np.sqrt(d * d + eps * eps)
    # eps + mean(root - eps) keeps L(a, a) == eps exact
    loss = float(eps + np.mean(root - eps))
    return loss, d / (d.size * root)
