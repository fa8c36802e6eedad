"""Sliding-window helpers behind every correlation in the package."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# upper bound on the bytes of one materialized im2col chunk
CHUNK_BYTES = 1 << 25


def out_size(n: int, k: int, stride: int, dilation: int, pad: int) -> int:
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def window_view(xpad: np.ndarray, kh: int, kw: int, stride: int = 1, dilation: int = 1) -> np.ndarray:
    """Strided view of shape (n, c, oh, ow, kh, kw) over an already padded input."""
    span_h = dilation * (kh - 1) + 1
    span_w = dilation * (kw - 1) + 1
    v = sliding_window_view(xpad, (span_h, span_w), axis=(2, 3))
    return v[:, :, ::stride, ::stride, ::dilation, ::dilation]


def row_chunks(n_rows: int, row_bytes: int):
    step = max(1, CHUNK_BYTES // max(row_bytes, 1))
    for r0 in range(0, n_rows, step):
        yield r0, min(n_rows, r0 + step)


def correlate_single_channel(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' cross-correlation of (n,1,h,w) with (f,k,k) kernels.

    Output rows are produced in fixed-size chunks, so the arithmetic for a
    given output pixel never depends on how the work is scheduled.
    """
    n, _, h, w = x.shape
    f, kh, kw = kernels.shape
    ph, pw = kh // 2, kw // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    view = window_view(xpad, kh, kw)
    kmat = kernels.reshape(f, kh * kw).T.astype(np.result_type(x, kernels), copy=False)
    out = np.empty((n, f, h, w), dtype=kmat.dtype)
    for b in range(n):
        for r0, r1 in row_chunks(h, w * kh * kw * 8):
            cols = view[b, 0, r0:r1].reshape((r1 - r0) * w, kh * kw)
            res = cols @ kmat
            out[b, :, r0:r1, :] = res.T.reshape(f, r1 - r0, w)
    return out
