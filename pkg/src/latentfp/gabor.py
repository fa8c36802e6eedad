"""Gabor kernels, orientation/frequency fields, classical enhancement and the
batched filter-bank engine.

Angles follow image coordinates: x to the right (columns), y downward (rows).
A kernel with orientation ``theta`` oscillates along the unit vector
``(cos theta, sin theta)``. Orientation fields store the *ridge* direction, so
the matching kernel orientation is the ridge direction plus pi/2.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy import ndimage

from ._im2col import correlate_single_channel
from .image import ImageError, bilinear_sample, check_image, check_tensor4, contrast_stretch

__all__ = [
    "GaborParams",
    "GaborBank",
    "OrientationField",
    "FrequencyField",
    "BenchReport",
    "gabor_kernel",
    "gabor_kernels",
    "build_bank",
    "estimate_orientation_field",
    "estimate_ridge_frequency",
    "apply_bank_batched",
    "apply_bank_naive",
    "enhance_classical",
    "bench_bank",
]

MIN_PERIOD = 2.0
MAX_PERIOD = 32.0


def wrap_angle(theta):
    """Wrap angles into [0, pi)."""
    out = np.mod(theta, np.pi)
    # np.mod can return exactly pi for tiny negative inputs
    return np.where(out >= np.pi, 0.0, out)


@dataclass(frozen=True)
class GaborParams:
    theta: float
    frequency: float
    sigma_x: float
    sigma_y: float
    ksize: int

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi:
            raise ValueError(f"theta must lie in [0, pi), got {self.theta}")
        if not 0.0 < self.frequency <= 0.5:
            raise ValueError(f"frequency must lie in (0, 0.5], got {self.frequency}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("sigmas must be positive")
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise ValueError(f"ksize must be a positive odd integer, got {self.ksize}")


@dataclass(frozen=True)
class GaborBank:
    filters: tuple[GaborParams, ...]
    dc_free: bool = True

    def __post_init__(self):
        if not self.filters:
            raise ValueError("a GaborBank needs at least one filter")

    def __len__(self) -> int:
        return len(self.filters)

    def kernels(self) -> list[np.ndarray]:
        return [gabor_kernel(p, self.dc_free) for p in self.filters]

    def stacked(self) -> np.ndarray:
        """All kernels zero-padded to the largest size, shape (f, k, k)."""
        kmax = max(p.ksize for p in self.filters)
        out = np.zeros((len(self.filters), kmax, kmax))
        for i, k in enumerate(self.kernels()):
            o = (kmax - k.shape[0]) // 2
            out[i, o : o + k.shape[0], o : o + k.shape[1]] = k
        return out


def kernel_grid(ksize: int) -> tuple[np.ndarray, np.ndarray]:
    c = ksize // 2
    y, x = np.mgrid[-c : c + 1, -c : c + 1].astype(np.float64)
    return x, y


def gabor_kernels(theta, frequency, sigma_x, sigma_y, ksize: int, dc_free: bool = False) -> np.ndarray:
    """Vectorized even-symmetric Gabor kernels, shape (f, ksize, ksize).

    Parameters are broadcast 1-D arrays. No range checks are done here; the
    learnable layer relies on that.
    """
    theta, frequency, sigma_x, sigma_y = (
        np.atleast_1d(np.asarray(a, dtype=np.float64))[:, None, None]
        for a in (theta, frequency, sigma_x, sigma_y)
    )
    x, y = kernel_grid(ksize)
    c, s = np.cos(theta), np.sin(theta)
    xt = x * c + y * s
    yt = -x * s + y * c
    k = np.exp(-0.5 * ((xt / sigma_x) ** 2 + (yt / sigma_y) ** 2)) * np.cos(2 * np.pi * frequency * xt)
    if dc_free:
        k = k - k.mean(axis=(1, 2), keepdims=True)
    return k


def gabor_kernel(p: GaborParams, dc_free: bool = False) -> np.ndarray:
    return gabor_kernels(p.theta, p.frequency, p.sigma_x, p.sigma_y, p.ksize, dc_free)[0]


def build_bank(ksizes, thetas, freqs, sigmas, dc_free: bool = True) -> GaborBank:
    """Cartesian product of the parameter lists, size-major then theta, f, sigma.

    ``sigmas`` entries are either scalars (isotropic) or ``(sigma_x, sigma_y)``
    pairs. Orientations are wrapped into [0, pi).
    """
    for name, vals in (("ksizes", ksizes), ("thetas", thetas), ("freqs", freqs), ("sigmas", sigmas)):
        if len(vals) == 0:
            raise ValueError(f"{name} must be nonempty")
    filters = []
    for k, t, f, s in product(ksizes, thetas, freqs, sigmas):
        sx, sy = (s, s) if np.isscalar(s) else s
        filters.append(GaborParams(float(wrap_angle(t)), float(f), float(sx), float(sy), int(k)))
    return GaborBank(tuple(filters), dc_free)


# -- orientation and frequency fields ----------------------------------------

@dataclass
class OrientationField:
    block_size: int
    angles: np.ndarray
    coherence: np.ndarray


@dataclass
class FrequencyField:
    block_size: int
    freqs: np.ndarray


def _block_sums(a: np.ndarray, b: int) -> np.ndarray:
    h, w = a.shape
    gh, gw = -(-h // b), -(-w // b)
    padded = np.zeros((gh * b, gw * b))
    padded[:h, :w] = a
    return padded.reshape(gh, b, gw, b).sum(axis=(1, 3))


def estimate_orientation_field(img: np.ndarray, block_size: int = 16, smooth_sigma: float = 16.0,
                               grad_sigma: float = 1.0) -> OrientationField:
    """Least-squares ridge orientation per block from Gaussian-derivative gradients.

    The squared-gradient sums (the doubled-angle representation) are smoothed
    with a Gaussian of ``smooth_sigma`` pixels before taking the angle.
    Derivatives of a ``grad_sigma`` Gaussian are far more isotropic than a
    3x3 Sobel at short ridge periods.
    """
    img = check_image(img)
    if block_size < 4:
        raise ValueError("block_size must be >= 4")
    h, w = img.shape
    if h < block_size or w < block_size:
        raise ImageError(f"image {img.shape} is smaller than one {block_size}px block")
    if grad_sigma <= 0:
        raise ValueError("grad_sigma must be positive")
    gx = ndimage.gaussian_filter(img, grad_sigma, order=(0, 1), mode="nearest")
    gy = ndimage.gaussian_filter(img, grad_sigma, order=(1, 0), mode="nearest")
    vx = _block_sums(gx * gx - gy * gy, block_size)
    vy = _block_sums(2.0 * gx * gy, block_size)
    energy = _block_sums(gx * gx + gy * gy, block_size)
    if smooth_sigma > 0:
        s = smooth_sigma / block_size
        vx = ndimage.gaussian_filter(vx, s, mode="nearest")
        vy = ndimage.gaussian_filter(vy, s, mode="nearest")
        energy = ndimage.gaussian_filter(energy, s, mode="nearest")
    angles = wrap_angle(0.5 * np.arctan2(vy, vx) + np.pi / 2)
    mag = np.hypot(vx, vy)
    with np.errstate(invalid="ignore", divide="ignore"):
        coherence = np.where(energy > 1e-12, mag / energy, 0.0)
    return OrientationField(block_size, angles, np.clip(coherence, 0.0, 1.0))


def _signature_peaks(sig: np.ndarray) -> np.ndarray:
    """Sub-pixel positions of strict interior maxima above the signature mean."""
    mean = sig.mean()
    left, mid, right = sig[:-2], sig[1:-1], sig[2:]
    idx = np.nonzero((mid > left) & (mid >= right) & (mid > mean))[0] + 1
    if idx.size == 0:
        return idx.astype(np.float64)
    a, b, c = sig[idx - 1], sig[idx], sig[idx + 1]
    denom = a - 2 * b + c
    with np.errstate(invalid="ignore", divide="ignore"):
        offset = np.where(np.abs(denom) > 1e-12, 0.5 * (a - c) / denom, 0.0)
    return idx + np.clip(offset, -0.5, 0.5)


def ridge_signature(img: np.ndarray, cy: float, cx: float, theta: float, length: int, width: int) -> np.ndarray:
    """Mean intensity profile across the ridges through (cy, cx).

    ``theta`` is the ridge direction; the profile runs along its normal and
    averages ``width`` samples along the ridge at each position.
    """
    nx, ny = -math.sin(theta), math.cos(theta)
    dx, dy = math.cos(theta), math.sin(theta)
    s = np.arange(length) - (length - 1) / 2.0
    t = np.arange(width) - (width - 1) / 2.0
    xs = cx + s[:, None] * nx + t[None, :] * dx
    ys = cy + s[:, None] * ny + t[None, :] * dy
    return bilinear_sample(img, xs, ys).mean(axis=1)


def estimate_ridge_frequency(img: np.ndarray, field: OrientationField, block_size: int | None = None,
                             window: int | None = None, smooth: float = 1.0) -> FrequencyField:
    """Ridge frequency per block from peak spacing of the oriented signature.

    The signature spans ``window`` pixels across the ridges (default twice the
    block size) and one block along them. It is smoothed with a ``smooth`` px
    Gaussian so noise does not split ridge tops into extra peaks; the margin
    sampled for the filter is trimmed afterwards so end peaks are not pulled
    inward. Blocks with fewer than two peaks or a period outside [2, 32] px
    get frequency 0.
    """
    img = check_image(img)
    b = field.block_size if block_size is None else block_size
    if b != field.block_size:
        raise ValueError("orientation field was computed with a different block size")
    length = 2 * b if window is None else window
    pad = int(math.ceil(3 * smooth)) if smooth > 0 else 0
    gh, gw = field.angles.shape
    freqs = np.zeros((gh, gw))
    for i in range(gh):
        for j in range(gw):
            cy = min(i * b + (b - 1) / 2.0, img.shape[0] - 1)
            cx = min(j * b + (b - 1) / 2.0, img.shape[1] - 1)
            sig = ridge_signature(img, cy, cx, field.angles[i, j], length + 2 * pad, b)
            if pad:
                sig = ndimage.gaussian_filter1d(sig, smooth, mode="nearest")[pad:pad + length]
            peaks = _signature_peaks(sig)
            if peaks.size < 2:
                continue
            period = (peaks[-1] - peaks[0]) / (peaks.size - 1)
            if MIN_PERIOD <= period <= MAX_PERIOD:
                freqs[i, j] = 1.0 / period
    return FrequencyField(b, freqs)


# -- bank application ---------------------------------------------------------

def _bank_array(bank) -> np.ndarray:
    if isinstance(bank, GaborBank):
        return bank.stacked()
    arr = np.asarray(bank, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[1] % 2 == 0:
        raise ValueError(f"kernel stack must be (f, k, k) with odd k, got {arr.shape}")
    return arr


def default_workers() -> int:
    return max(1, int(os.environ.get("LATENTFP_THREADS", "1")))


def apply_bank_batched(x: np.ndarray, bank, workers: int | None = None) -> np.ndarray:
    """Apply every kernel of ``bank`` to a (n, 1, h, w) batch, zero padded.

    Returns (n, |bank|, h, w). ``bank`` may be a GaborBank or a raw (f, k, k)
    kernel stack. Samples are distributed over ``workers`` threads; each sample
    is computed by the same chunked code path, so the result does not depend on
    the worker count.
    """
    x = check_tensor4(x, "x")
    if x.shape[1] != 1:
        raise ValueError(f"apply_bank_batched expects one input channel, got {x.shape[1]}")
    kernels = _bank_array(bank)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or x.shape[0] == 1:
        return correlate_single_channel(x, kernels)
    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda b: correlate_single_channel(x[b : b + 1], kernels), range(x.shape[0])))
    return np.concatenate(parts, axis=0)


def apply_bank_naive(x: np.ndarray, bank) -> np.ndarray:
    """Reference implementation: explicit loop over (sample, filter, row, column)."""
    x = check_tensor4(x, "x")
    if x.shape[1] != 1:
        raise ValueError(f"apply_bank_naive expects one input channel, got {x.shape[1]}")
    kernels = _bank_array(bank)
    n, _, h, w = x.shape
    f, k, _ = kernels.shape
    r = k // 2
    xpad = np.pad(np.asarray(x, dtype=np.float64), ((0, 0), (0, 0), (r, r), (r, r)))
    out = np.zeros((n, f, h, w))
    for b in range(n):
        for j in range(f):
            kern = kernels[j]
            for yy in range(h):
                for xx in range(w):
                    out[b, j, yy, xx] = np.sum(xpad[b, 0, yy : yy + k, xx : xx + k] * kern)
    return out


# -- classical enhancement ---------------------------------------------------

def _nearest_index(values: np.ndarray, grid: np.ndarray, periodic: float | None = None) -> np.ndarray:
    d = np.abs(values[..., None] - grid)
    if periodic is not None:
        d = np.minimum(d, periodic - d)
    # argmin returns the first minimum, i.e. ties go to the smaller index
    return np.argmin(d, axis=-1)


def enhance_classical(img: np.ndarray, block_size: int = 16, ksize: int = 25, sigma: float = 4.0,
                      mask_threshold: float = 0.3, smooth_sigma: float = 16.0, n_orientations: int = 16,
                      stretch_pct: tuple[float, float] = (1.0, 99.0)) -> np.ndarray:
    """Orientation- and frequency-tuned Gabor enhancement.

    Each reliable block is filtered with the bank kernel nearest to its
    (orientation, frequency); responses are blended bilinearly between block
    centers. Blocks with frequency 0 or coherence below ``mask_threshold``
    pass the stretched input through.
    """
    img = check_image(img)
    stretched, degenerate = contrast_stretch(img, *stretch_pct)
    if degenerate:
        return img.copy()
    ofield = estimate_orientation_field(stretched, block_size, smooth_sigma)
    ffield = estimate_ridge_frequency(stretched, ofield, block_size)

    thetas = np.arange(n_orientations) * np.pi / n_orientations
    # geometric period grid, ~5% apart, spanning the valid window
    periods = MIN_PERIOD * 1.05 ** np.arange(int(np.log(MAX_PERIOD / MIN_PERIOD) / np.log(1.05)) + 1)
    bank_freqs = 1.0 / periods

    reliable = (ffield.freqs > 0) & (ofield.coherence >= mask_threshold)
    kernel_theta = wrap_angle(ofield.angles + np.pi / 2)
    t_idx = _nearest_index(kernel_theta, thetas, periodic=np.pi)
    f_idx = _nearest_index(ffield.freqs, bank_freqs)
    combo = np.where(reliable, t_idx * len(bank_freqs) + f_idx, -1)

    used = np.unique(combo[combo >= 0])
    channel_of = np.zeros(n_orientations * len(bank_freqs) + 1, dtype=np.intp)
    layers = [stretched]
    if used.size:
        th = thetas[used // len(bank_freqs)]
        fr = bank_freqs[used % len(bank_freqs)]
        kernels = gabor_kernels(th, fr, sigma, sigma, ksize, dc_free=True)
        # unit response to a matched unit-amplitude cosine
        x, y = kernel_grid(ksize)
        carrier = np.cos(2 * np.pi * fr[:, None, None] * (x * np.cos(th)[:, None, None] + y * np.sin(th)[:, None, None]))
        kernels /= np.sum(kernels * carrier, axis=(1, 2), keepdims=True)
        resp = apply_bank_batched(stretched[None, None], kernels)[0]
        layers.extend(0.5 + resp)
        channel_of[used] = np.arange(1, used.size + 1)
    stack = np.stack(layers)
    block_channel = np.where(combo >= 0, channel_of[np.maximum(combo, 0)], 0)

    h, w = img.shape
    gh, gw = combo.shape
    gy = (np.arange(h) + 0.5) / block_size - 0.5
    gx = (np.arange(w) + 0.5) / block_size - 0.5
    iy0 = np.clip(np.floor(gy).astype(np.intp), 0, gh - 1)
    ix0 = np.clip(np.floor(gx).astype(np.intp), 0, gw - 1)
    iy1 = np.minimum(iy0 + 1, gh - 1)
    ix1 = np.minimum(ix0 + 1, gw - 1)
    wy = np.clip(gy - iy0, 0.0, 1.0)[:, None]
    wx = np.clip(gx - ix0, 0.0, 1.0)[None, :]
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]

    def pick(iy, ix):
        ch = block_channel[iy[:, None], ix[None, :]]
        return stack[ch, rows, cols]

    out = ((1 - wy) * (1 - wx) * pick(iy0, ix0) + (1 - wy) * wx * pick(iy0, ix1)
           + wy * (1 - wx) * pick(iy1, ix0) + wy * wx * pick(iy1, ix1))
    final, degenerate = contrast_stretch(out, 0.0, 100.0)
    return np.clip(out, 0.0, 1.0) if degenerate else final


# -- benchmark ------------------------------------------------------------------

@dataclass
class BenchReport:
    height: int
    width: int
    n_filters: int
    batch: int
    ksize: int
    naive_s: list = field(default_factory=list)
    batched_s: list = field(default_factory=list)
    naive_median_s: float = 0.0
    batched_median_s: float = 0.0
    speedup: float = 0.0
    max_abs_diff: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def bench_bank(h: int = 512, w: int = 512, n_filters: int = 8, batch: int = 1, reps: int = 3,
               ksize: int = 15, seed: int = 0) -> BenchReport:
    """Time the naive loop against the batched path on identical random input."""
    if min(h, w, n_filters, batch, reps, ksize) <= 0:
        raise ValueError("benchmark sizes must be positive")
    rng = np.random.default_rng(seed)
    x = rng.random((batch, 1, h, w))
    thetas = np.arange(n_filters) * np.pi / n_filters
    kernels = gabor_kernels(thetas, 0.1, 4.0, 4.0, ksize, dc_free=True)
    report = BenchReport(h, w, n_filters, batch, ksize)
    diff = 0.0
    for _ in range(reps):
        t0 = time.perf_counter()
        ref = apply_bank_naive(x, kernels)
        t1 = time.perf_counter()
        fast = apply_bank_batched(x, kernels)
        t2 = time.perf_counter()
        report.naive_s.append(t1 - t0)
        report.batched_s.append(t2 - t1)
        diff = max(diff, float(np.max(np.abs(ref - fast))))
    report.naive_median_s = float(np.median(report.naive_s))
    report.batched_median_s = float(np.median(report.batched_s))
    report.speedup = report.naive_median_s / max(report.batched_median_s, 1e-12)
    report.max_abs_diff = diff
    return report
