"""Image and tensor conventions shared by the whole package.

An *Image* is a 2-D ``float64`` array of shape ``(height, width)`` whose values
are finite and lie in ``[0, 1]``. A *Tensor4* is a 4-D array shaped
``(batch, channels, height, width)``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "ImageError",
    "Stretched",
    "check_image",
    "check_tensor4",
    "contrast_stretch",
    "bilinear_sample",
    "image_to_tensor",
    "tensor_to_image",
]


class ImageError(ValueError):
    """Raised when an array violates the Image or Tensor4 contract."""


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ImageError(f"{name} must be 2-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError(f"{name} has a zero dimension: {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageError(f"{name} values must lie in [0, 1]")
    return img


def check_tensor4(t: np.ndarray, name: str = "tensor") -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 4:
        raise ImageError(f"{name} must be rank 4 (n, c, h, w), got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ImageError(f"{name} contains non-finite values")
    return t


class Stretched(NamedTuple):
    image: np.ndarray
    degenerate: bool


def contrast_stretch(img: np.ndarray, lo_pct: float = 0.0, hi_pct: float = 100.0) -> Stretched:
    """Map the ``lo_pct`` percentile to 0 and ``hi_pct`` to 1, clipping outside.

    Percentiles use linear interpolation between order statistics. A
    degenerate input (both percentiles equal) yields zeros and
    ``degenerate=True`` instead of raising.
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got ({lo_pct}, {hi_pct})")
    img = np.asarray(img, dtype=np.float64)
    lo, hi = np.percentile(img, [lo_pct, hi_pct])
    if not hi > lo:
        return Stretched(np.zeros_like(img), True)
    out = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    return Stretched(out, False)


def bilinear_sample(img: np.ndarray, x, y):
    """Bilinear interpolation at continuous pixel coordinates.

    ``x`` indexes columns and ``y`` rows; both may be scalars or arrays of a
    common shape. Coordinates outside the image are clamped to the edge.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return out[()] if out.ndim == 0 else out


def image_to_tensor(img: np.ndarray) -> np.ndarray:
    img = check_image(img)
    return np.array(img, dtype=np.float64).reshape(1, 1, *img.shape)


def tensor_to_image(t: np.ndarray) -> np.ndarray:
    t = check_tensor4(t)
    if t.shape[0] != 1 or t.shape[1] != 1:
        raise ImageError(f"tensor_to_image needs shape (1, 1, h, w), got {t.shape}")
    return np.clip(np.asarray(t[0, 0], dtype=np.float64), 0.0, 1.0)
