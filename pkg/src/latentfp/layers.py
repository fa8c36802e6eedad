"""Network building blocks composed from the operators in :mod:`latentfp.ops`.

Each block owns a flat ``params`` dict (nested operator params use dotted
prefixes such as ``"se.w1"``). ``forward`` returns ``(y, cache)`` and
``backward(dy, cache)`` returns ``(dx, grads)``; blocks keep no state between
calls, so a built network can serve concurrent forwards.
"""
from __future__ import annotations

import math

import numpy as np

from . import ops

__all__ = ["ConvBlock", "DenseBlock", "UpConvBlock", "FinalConv", "ResNetStub", "space_to_depth", "depth_to_space"]


def _sub(params: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _prefixed(grads: dict, prefix: str) -> dict:
    return {prefix + k: v for k, v in grads.items()}


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


def _wn_init(rng, shape, dtype):
    v = _he(rng, shape, int(np.prod(shape[1:])), dtype)
    g = np.sqrt(np.sum(v.astype(np.float64) ** 2, axis=tuple(range(1, v.ndim)))).astype(dtype)
    return v, g


class ConvBlock:
    """Weight-normalized conv, instance norm, leaky ReLU, dropout, SE.

    The conv has no bias: the instance norm that follows would cancel it.
    """

    def __init__(self, cin, cout, stride=1, dilation=2, ksize=3, dropout=0.1, reduction=16, rng=None,
                 dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.stride, self.dilation, self.dropout = stride, dilation, dropout
        self.pad = dilation * (ksize - 1) // 2
        v, g = _wn_init(rng, (cout, cin, ksize, ksize), dtype)
        self.params = {"v": v, "g": g, "gamma": np.ones(cout, dtype), "beta": np.zeros(cout, dtype)}
        self.params.update(_prefixed(ops.init_se_params(cout, reduction, rng, dtype), "se."))

    def forward(self, x, training=False, seed=0):
        p = self.params
        w, c_wn = ops.weight_norm_forward(p["v"], p["g"])
        h, c_conv = ops.conv2d_forward(x, w, None, self.stride, self.dilation, self.pad)
        h, c_in = ops.instance_norm_forward(h, p["gamma"], p["beta"])
        h, c_act = ops.leaky_relu_forward(h)
        h, c_drop = ops.dropout_forward(h, self.dropout, seed, training)
        y, c_se = ops.se_block_forward(h, _sub(p, "se."))
        return y, (c_wn, c_conv, c_in, c_act, c_drop, c_se)

    def backward(self, dy, cache):
        c_wn, c_conv, c_in, c_act, c_drop, c_se = cache
        dh, g_se = ops.se_block_backward(dy, c_se)
        dh = ops.dropout_backward(dh, c_drop)
        dh = ops.leaky_relu_backward(dh, c_act)
        dh, dgamma, dbeta = ops.instance_norm_backward(dh, c_in)
        dx, dw, _ = ops.conv2d_backward(dh, c_conv)
        dv, dg = ops.weight_norm_backward(dw, c_wn)
        grads = {"v": dv, "g": dg, "gamma": dgamma, "beta": dbeta}
        grads.update(_prefixed(g_se, "se."))
        return dx, grads


class DenseBlock:
    """Middle block: conv 3x3, IN, leaky, SE attention, conv 1x1, IN, leaky."""

    def __init__(self, cin, cout, reduction=16, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.params = {
            "w1": _he(rng, (cout, cin, 3, 3), cin * 9, dtype),
            "gamma1": np.ones(cout, dtype), "beta1": np.zeros(cout, dtype),
            "w2": _he(rng, (cout, cout, 1, 1), cout, dtype),
            "gamma2": np.ones(cout, dtype), "beta2": np.zeros(cout, dtype),
        }
        self.params.update(_prefixed(ops.init_se_attention_params(cout, reduction, rng, dtype), "attn."))

    def forward(self, x, training=False, seed=0):
        p = self.params
        h, c1 = ops.conv2d_forward(x, p["w1"], None, 1, 1, 1)
        h, n1 = ops.instance_norm_forward(h, p["gamma1"], p["beta1"])
        h, a1 = ops.leaky_relu_forward(h)
        h, at = ops.se_attention_forward(h, _sub(p, "attn."))
        h, c2 = ops.conv2d_forward(h, p["w2"])
        h, n2 = ops.instance_norm_forward(h, p["gamma2"], p["beta2"])
        y, a2 = ops.leaky_relu_forward(h)
        return y, (c1, n1, a1, at, c2, n2, a2)

    def backward(self, dy, cache):
        c1, n1, a1, at, c2, n2, a2 = cache
        grads = {}
        dh = ops.leaky_relu_backward(dy, a2)
        dh, grads["gamma2"], grads["beta2"] = ops.instance_norm_backward(dh, n2)
        dh, grads["w2"], _ = ops.conv2d_backward(dh, c2)
        dh, g_at = ops.se_attention_backward(dh, at)
        grads.update(_prefixed(g_at, "attn."))
        dh = ops.leaky_relu_backward(dh, a1)
        dh, grads["gamma1"], grads["beta1"] = ops.instance_norm_backward(dh, n1)
        dx, grads["w1"], _ = ops.conv2d_backward(dh, c1)
        return dx, grads


class UpConvBlock:
    """SE, weight-normalized transposed conv (x``factor``), IN, leaky, dropout."""

    def __init__(self, cin, cout, factor=2, dropout=0.1, reduction=16, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.dropout = dropout
        v, g = _wn_init(rng, (cout, cin, factor, factor), dtype)
        self.params = {"v": v, "g": g, "gamma": np.ones(cout, dtype), "beta": np.zeros(cout, dtype)}
        self.params.update(_prefixed(ops.init_se_params(cin, reduction, rng, dtype), "se."))

    def forward(self, x, training=False, seed=0):
        p = self.params
        h, c_se = ops.se_block_forward(x, _sub(p, "se."))
        w, c_wn = ops.weight_norm_forward(p["v"], p["g"])
        h, c_up = ops.conv_transpose_forward(h, w)
        h, c_in = ops.instance_norm_forward(h, p["gamma"], p["beta"])
        h, c_act = ops.leaky_relu_forward(h)
        y, c_drop = ops.dropout_forward(h, self.dropout, seed, training)
        return y, (c_se, c_wn, c_up, c_in, c_act, c_drop)

    def backward(self, dy, cache):
        c_se, c_wn, c_up, c_in, c_act, c_drop = cache
        dh = ops.dropout_backward(dy, c_drop)
        dh = ops.leaky_relu_backward(dh, c_act)
        dh, dgamma, dbeta = ops.instance_norm_backward(dh, c_in)
        dh, dw, _ = ops.conv_transpose_backward(dh, c_up)
        dv, dg = ops.weight_norm_backward(dw, c_wn)
        dx, g_se = ops.se_block_backward(dh, c_se)
        grads = {"v": dv, "g": dg, "gamma": dgamma, "beta": dbeta}
        grads.update(_prefixed(g_se, "se."))
        return dx, grads


class FinalConv:
    """3x3 conv with bias followed by a sigmoid."""

    def __init__(self, cin, cout=1, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.params = {"w": _he(rng, (cout, cin, 3, 3), cin * 9, dtype) * dtype(0.1), "b": np.zeros(cout, dtype)}

    def forward(self, x, training=False, seed=0):
        h, c = ops.conv2d_forward(x, self.params["w"], self.params["b"], 1, 1, 1)
        y = ops.sigmoid(h)
        return y, (c, y)

    def backward(self, dy, cache):
        c, y = cache
        dx, dw, db = ops.conv2d_backward(dy * y * (1 - y), c)
        return dx, {"w": dw, "b": db}


def space_to_depth(x, f: int):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // f, f, w // f, f).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * f * f, h // f, w // f)


def depth_to_space(x, f: int):
    n, cff, h, w = x.shape
    c = cff // (f * f)
    return x.reshape(n, c, f, f, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * f, w * f)


class ResNetStub:
    """Stand-in for the pretrained 2048-channel feature extractor.

    Folds each ``factor`` x ``factor`` patch into channels (a strided pyramid
    level) and applies a random 1x1 projection plus leaky ReLU, so features
    land on the deepest encoder grid.
    """

    def __init__(self, cin=1, cout=2048, factor=16, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        self.factor = factor
        fan_in = cin * factor * factor
        self.params = {"w": _he(rng, (cout, fan_in, 1, 1), fan_in, dtype), "b": np.zeros(cout, dtype)}

    def forward(self, x, training=False, seed=0):
        s = space_to_depth(x, self.factor)
        h, c = ops.conv2d_forward(s, self.params["w"], self.params["b"])
        y, a = ops.leaky_relu_forward(h)
        return y, (c, a)

    def backward(self, dy, cache):
        c, a = cache
        ds, dw, db = ops.conv2d_backward(ops.leaky_relu_backward(dy, a), c)
        return depth_to_space(ds, self.factor), {"w": dw, "b": db}
