"""Learnable Gabor layer: a bank whose orientation, frequency and scales are
trained by gradient descent, followed by SE attention over the responses and
a learned mix back to one channel."""
from __future__ import annotations

import numpy as np

from .gabor import kernel_grid
from .ops import conv2d_backward, conv2d_forward, init_se_attention_params, se_attention_backward, se_attention_forward

__all__ = ["gabor_kernels_and_grads", "LearnableGaborLayer", "stretch_per_sample", "stretch_per_sample_backward"]

MIN_FREQUENCY = 1e-4
MAX_FREQUENCY = 0.5
GABOR_KEYS = ("theta", "frequency", "log_sigma_x", "log_sigma_y")


def gabor_kernels_and_grads(theta, frequency, log_sigma_x, log_sigma_y, ksize: int, dc_free: bool = False):
    """Kernels (f, k, k) and their derivatives w.r.t. each per-filter parameter.

    Returns ``(k, {"theta": dk, "frequency": dk, "log_sigma_x": dk, "log_sigma_y": dk})``.
    """
    theta, frequency, log_sigma_x, log_sigma_y = (
        np.asarray(a, dtype=np.float64)[:, None, None] for a in (theta, frequency, log_sigma_x, log_sigma_y)
    )
    sx, sy = np.exp(log_sigma_x), np.exp(log_sigma_y)
    x, y = kernel_grid(ksize)
    c, s = np.cos(theta), np.sin(theta)
    xt = x * c + y * s
    yt = -x * s + y * c
    env = np.exp(-0.5 * ((xt / sx) ** 2 + (yt / sy) ** 2))
    phase = 2 * np.pi * frequency * xt
    cos_p, sin_p = np.cos(phase), np.sin(phase)
    k = env * cos_p
    # d(xt)/d(theta) = yt and d(yt)/d(theta) = -xt
    d_env_theta = env * (-(xt * yt) / sx**2 + (yt * xt) / sy**2)
    grads = {
        "theta": d_env_theta * cos_p - env * sin_p * 2 * np.pi * frequency * yt,
        "frequency": -env * sin_p * 2 * np.pi * xt,
        "log_sigma_x": k * (xt / sx) ** 2,
        "log_sigma_y": k * (yt / sy) ** 2,
    }
    if dc_free:
        k = k - k.mean(axis=(1, 2), keepdims=True)
        grads = {name: g - g.mean(axis=(1, 2), keepdims=True) for name, g in grads.items()}
    return k, grads


def stretch_per_sample(x):
    """Min-max stretch of every sample to [0, 1]; constant samples become 0."""
    n = x.shape[0]
    flat = x.reshape(n, -1)
    imin = flat.argmin(axis=1)
    imax = flat.argmax(axis=1)
    lo = flat[np.arange(n), imin]
    rng = flat[np.arange(n), imax] - lo
    ok = rng > 0
    safe = np.where(ok, rng, 1)
    out = np.where(ok[:, None], (flat - lo[:, None]) / safe[:, None], 0).reshape(x.shape).astype(x.dtype, copy=False)
    return out, (out, imin, imax, safe, ok)


def stretch_per_sample_backward(dout, cache):
    out, imin, imax, safe, ok = cache
    n = out.shape[0]
    d = dout.reshape(n, -1)
    s = out.reshape(n, -1)
    dx = d / safe[:, None]
    # x' = (x - lo) / (hi - lo): the extreme elements also move lo and hi
    dlo = np.sum(d * (s - 1), axis=1) / safe
    dhi = -np.sum(d * s, axis=1) / safe
    dx[np.arange(n), imin] += dlo
    dx[np.arange(n), imax] += dhi
    dx[~ok] = 0
    return dx.reshape(out.shape)


class LearnableGaborLayer:
    """Gabor bank with trainable (theta, frequency, log sigma_x, log sigma_y).

    Forward: per-sample contrast stretch, bank correlation, SE attention over
    the bank responses, then a weighted sum of the attended channels.
    Kernels are rebuilt from the current parameters on every call.
    """

    def __init__(self, n_filters: int = 8, ksize: int = 15, frequency: float = 1 / 8, sigma: float = 4.0,
                 dc_free: bool = False, reduction: int = 16, rng=None, dtype=np.float64):
        if ksize % 2 == 0:
            raise ValueError("ksize must be odd")
        rng = np.random.default_rng(rng)
        self.ksize = ksize
        self.dc_free = dc_free
        self.reduction = reduction
        self.params = {
            "theta": np.arange(n_filters) * np.pi / n_filters,
            "frequency": np.full(n_filters, frequency),
            "log_sigma_x": np.full(n_filters, np.log(sigma)),
            "log_sigma_y": np.full(n_filters, np.log(sigma)),
            "mix": np.full(n_filters, 1.0 / n_filters),
        }
        for name, arr in init_se_attention_params(n_filters, reduction, rng).items():
            self.params["attn." + name] = arr
        self.params = {k: np.ascontiguousarray(v, dtype=dtype) for k, v in self.params.items()}

    @property
    def n_filters(self) -> int:
        return self.params["theta"].shape[0]

    def attn_params(self) -> dict:
        return {k[5:]: v for k, v in self.params.items() if k.startswith("attn.")}

    def kernels(self):
        p = self.params
        return gabor_kernels_and_grads(p["theta"], p["frequency"], p["log_sigma_x"], p["log_sigma_y"],
                                       self.ksize, self.dc_free)

    def forward(self, x, training: bool = False, seed: int = 0):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"gabor layer expects (n, 1, h, w) input, got {x.shape}")
        dtype = self.params["mix"].dtype
        xs, s_cache = stretch_per_sample(np.asarray(x, dtype=dtype))
        k, dk = self.kernels()
        r, c_cache = conv2d_forward(xs, k[:, None].astype(dtype), None, pad=self.ksize // 2)
        ra, a_cache = se_attention_forward(r, self.attn_params())
        y = np.einsum("j,njhw->nhw", self.params["mix"], ra)[:, None]
        return y, {"stretch": s_cache, "conv": c_cache, "attn": a_cache, "ra": ra, "dk": dk}

    def backward(self, dy, cache):
        if cache is None:
            raise RuntimeError("gabor layer backward called without a forward cache")
        mix = self.params["mix"]
        grads = {"mix": np.einsum("nhw,njhw->j", dy[:, 0], cache["ra"])}
        dra = mix[None, :, None, None] * dy
        dr, agrads = se_attention_backward(dra, cache["attn"])
        for name, g in agrads.items():
            grads["attn." + name] = g
        dxs, dk, _ = conv2d_backward(dr, cache["conv"])
        dk = dk[:, 0]
        for name in GABOR_KEYS:
            grads[name] = np.sum(dk * cache["dk"][name], axis=(1, 2)).astype(mix.dtype)
        dx = stretch_per_sample_backward(dxs, cache["stretch"])
        return dx, grads

    def project(self) -> None:
        """Restore the frequency invariant (0, 0.5] after a parameter update.

        Sigmas are also kept between half a pixel and the kernel size so a
        bad step cannot collapse an envelope.
        """
        p = self.params
        np.clip(p["frequency"], MIN_FREQUENCY, MAX_FREQUENCY, out=p["frequency"])
        for name in ("log_sigma_x", "log_sigma_y"):
            np.clip(p[name], np.log(0.5), np.log(self.ksize), out=p[name])
