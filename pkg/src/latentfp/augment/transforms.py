"""The eight latent-print augmentations.

Every transform takes a [0, 1] image and returns a new clamped image of the
same shape; randomness comes only from the integer ``seed`` argument.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..image import bilinear_sample, check_image
from ..seeding import derive_seed
from . import raster
from .perlin import perlin

__all__ = ["AugmentError", "texture_blend", "region_mask", "resample", "elastic_deform", "add_noise",
           "dusting_powder", "adjust_brightness", "occlude", "smear", "moisture", "gaussian_blur", "edge_image",
           "SHAPES", "NOISE_KINDS"]

SHAPES = ("letters", "scratches", "freeform_lines", "ellipses", "curves", "rectangles")
NOISE_KINDS = ("gaussian", "salt_pepper", "speckle")
INTENSITIES = ("black", "white", "gray")


class AugmentError(ValueError):
    """Invalid augmentation name or parameter."""


def _clip(x):
    return np.clip(x, 0.0, 1.0)


def resample(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize with pixel-centre alignment."""
    ih, iw = img.shape
    if (ih, iw) == (h, w):
        return np.array(img, dtype=np.float64)
    ys = (np.arange(h) + 0.5) * ih / h - 0.5
    xs = (np.arange(w) + 0.5) * iw / w - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(np.asarray(img, dtype=np.float64), xx, yy)


def region_mask(h: int, w: int, region_frac: float, seed: int, cell: float = 16.0) -> np.ndarray:
    """Irregular mask of exactly ``round(region_frac * h * w)`` pixels: the top ranks of a Perlin field."""
    n = int(round(region_frac * h * w))
    mask = np.zeros(h * w, dtype=bool)
    if n > 0:
        field = perlin(w, h, min(cell, max(h, w, 2)), octaves=3, seed=seed).ravel()
        mask[np.argsort(-field, kind="stable")[:n]] = True
    return mask.reshape(h, w)


def texture_blend(img, texture, alpha: float, region_frac: float, seed: int, cell: float = 16.0, mask=None):
    """Blend ``texture`` into a seeded irregular region: ``(1 - alpha) * img + alpha * texture`` inside."""
    img = check_image(img)
    if not 0 <= alpha <= 1 or not 0 <= region_frac <= 1:
        raise AugmentError("texture_blend needs alpha and region_frac in [0, 1]")
    h, w = img.shape
    if alpha == 0:
        return img.copy()
    tex = resample(np.asarray(texture, dtype=np.float64), h, w)
    if mask is None:
        mask = region_mask(h, w, region_frac, seed, cell)
    else:
        mask = resample(np.asarray(mask, dtype=np.float64), h, w) > 0.5
    out = img.copy()
    out[mask] = (1 - alpha) * img[mask] + alpha * tex[mask]
    return _clip(out)


def elastic_deform(img, alpha: float, sigma: float, seed: int):
    """Warp by a smoothed random displacement field.

    The two smoothed uniform fields are rescaled jointly so their largest
    component is 1, which makes ``alpha`` the peak displacement in pixels.
    """
    img = check_image(img)
    if sigma <= 0:
        raise AugmentError("elastic_deform needs sigma > 0")
    h, w = img.shape
    rng = np.random.default_rng(seed)
    field = rng.uniform(-1.0, 1.0, size=(2, h, w))
    field = np.stack([ndimage.gaussian_filter(f, sigma, mode="reflect") for f in field])
    peak = np.abs(field).max()
    if peak > 0:
        field /= peak
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return _clip(bilinear_sample(img, xs + alpha * field[0], ys + alpha * field[1]))


def displacement_field(shape, alpha: float, sigma: float, seed: int) -> np.ndarray:
    """The ``(2, h, w)`` displacement ``elastic_deform`` applies (for diagnostics)."""
    rng = np.random.default_rng(seed)
    field = rng.uniform(-1.0, 1.0, size=(2, *shape))
    field = np.stack([ndimage.gaussian_filter(f, sigma, mode="reflect") for f in field])
    peak = np.abs(field).max()
    return alpha * field / peak if peak > 0 else field


def add_noise(img, kind: str, seed: int, sigma: float = 0.0, p: float = 0.0):
    img = check_image(img)
    if kind not in NOISE_KINDS:
        raise AugmentError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    if sigma < 0 or not 0 <= p <= 1:
        raise AugmentError("add_noise needs sigma >= 0 and p in [0, 1]")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        return _clip(img + rng.normal(0.0, 1.0, img.shape) * sigma)
    if kind == "speckle":
        return _clip(img * (1 + rng.normal(0.0, 1.0, img.shape) * sigma))
    u = rng.random(img.shape)
    out = img.copy()
    out[u < p / 2] = 0.0
    out[(u >= p / 2) & (u < p)] = 1.0
    return out


def dusting_powder(img, cell: float, intensity: float, seed: int, octaves: int = 4):
    """Uneven powder: Perlin modulation weighted towards dark (ridge) pixels."""
    img = check_image(img)
    if not 0 <= intensity <= 1:
        raise AugmentError("dusting_powder needs intensity in [0, 1]")
    h, w = img.shape
    noise = perlin(w, h, cell, octaves, seed)
    return _clip(img + intensity * (noise - 0.5) * (1.0 - img))


def adjust_brightness(img, factor: float):
    img = check_image(img)
    if not factor > 0:
        raise AugmentError("brightness factor must be > 0")
    return _clip(img * factor)


def _intensity(rng, choices) -> float:
    kind = choices[rng.integers(len(choices))]
    if kind == "black":
        return 0.0
    if kind == "white":
        return 1.0
    return float(rng.uniform(0.0, 1.0))


def _shape_mask(kind: str, h: int, w: int, rng, size_range) -> np.ndarray:
    side = min(h, w)
    size = lambda: rng.uniform(*size_range) * side  # noqa: E731
    point = lambda: (rng.uniform(0, w - 1), rng.uniform(0, h - 1))  # noqa: E731
    if kind == "ellipses":
        cx, cy = point()
        return raster.ellipse_mask(h, w, cx, cy, size() / 2, size() / 2, rng.uniform(0, np.pi))
    if kind == "rectangles":
        cx, cy = point()
        hw, hh = size() / 2, size() / 2
        return raster.rect_mask(h, w, cx - hw, cy - hh, cx + hw, cy + hh)
    if kind == "scratches":
        (xa, ya), ang, length = point(), rng.uniform(0, np.pi), size() * 2
        pts = [(xa, ya), (xa + length * np.cos(ang), ya + length * np.sin(ang))]
        return raster.polyline_mask(h, w, pts, rng.uniform(1.0, 2.0))
    if kind == "curves":
        p0, p1, p2 = point(), point(), point()
        return raster.polyline_mask(h, w, raster.bezier_points(p0, p1, p2), rng.uniform(1.0, 3.0))
    if kind == "freeform_lines":
        n_steps = int(rng.integers(10, 41))
        pts = raster.random_walk_points(rng, point(), n_steps, max(side / 40, 1.0))
        return raster.polyline_mask(h, w, pts, rng.uniform(1.0, 3.0))
    if kind == "letters":
        alphabet = list(raster.FONT_5X7)
        text = "".join(alphabet[i] for i in rng.integers(len(alphabet), size=int(rng.integers(1, 5))))
        scale = int(rng.integers(1, max(side // 40, 1) + 1))
        x, y = point()
        return raster.text_mask(h, w, text, int(x), int(y), scale)
    raise AugmentError(f"unknown shape {kind!r}; expected a subset of {SHAPES}")


def occlude(img, shapes, count_range, seed: int, intensities=INTENSITIES, size_range=(0.05, 0.3)):
    """Paint a seeded number of random shapes over the image, in order.

    Shape ``i`` draws its geometry from its own stream ``derive_seed(seed, i)``,
    so a shape never depends on how many random numbers earlier shapes used.
    """
    img = check_image(img)
    shapes = tuple(shapes)
    if not shapes:
        raise AugmentError("occlude needs a nonempty shape set")
    bad = [s for s in shapes if s not in SHAPES]
    if bad:
        raise AugmentError(f"unknown shapes {bad}; expected a subset of {SHAPES}")
    lo, hi = (int(v) for v in count_range)
    if lo < 0 or hi < lo:
        raise AugmentError("count_range must satisfy 0 <= lo <= hi")
    bad = [s for s in intensities if s not in INTENSITIES]
    if bad or not intensities:
        raise AugmentError(f"intensities must be a nonempty subset of {INTENSITIES}")
    h, w = img.shape
    count = int(np.random.default_rng(seed).integers(lo, hi + 1))
    out = img.copy()
    for i in range(count):
        rng = np.random.default_rng(derive_seed(seed, i))
        kind = shapes[rng.integers(len(shapes))]
        value = _intensity(rng, tuple(intensities))
        out[_shape_mask(kind, h, w, rng, size_range)] = value
    return out


def gaussian_blur(img, k: int) -> np.ndarray:
    """Blur with a ``k``-tap Gaussian whose sigma follows the usual size rule."""
    sigma = 0.3 * ((k - 1) * 0.5 - 1) + 0.8
    return ndimage.gaussian_filter(img, sigma, mode="reflect", truncate=(k // 2) / sigma)


def smear(img, kmax: int, ellipse_count_range, drag_range, seed: int, axis_range=(0.05, 0.25),
          drag_weight: float = 0.5, trace: list | None = None):
    """Blur inside random ellipses, then drag content across each ellipse.

    A drag picks two interior points p0 and p1 and blends the image shifted by
    ``p1 - p0`` into the ellipse with weight ``drag_weight``. Each drag is
    appended to ``trace`` when given.
    """
    img = check_image(img)
    if kmax < 3 or kmax % 2 == 0:
        raise AugmentError("smear needs an odd kmax >= 3")
    e_lo, e_hi = (int(v) for v in ellipse_count_range)
    d_lo, d_hi = (int(v) for v in drag_range)
    if e_lo < 0 or e_hi < e_lo or d_lo < 0 or d_hi < d_lo:
        raise AugmentError("smear count ranges must satisfy 0 <= lo <= hi")
    rng = np.random.default_rng(seed)
    k = 2 * int(rng.integers(1, kmax // 2 + 1)) + 1
    n_ell = int(rng.integers(e_lo, e_hi + 1))
    if n_ell == 0:
        return img.copy()
    h, w = img.shape
    side = min(h, w)
    ellipses = []
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(n_ell):
        cx, cy = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
        a, b = rng.uniform(*axis_range, size=2) * side
        e = raster.ellipse_mask(h, w, cx, cy, max(a, 1.0), max(b, 1.0), rng.uniform(0, np.pi))
        ellipses.append(e)
        mask |= e
    out = np.where(mask, gaussian_blur(img, k), img)
    if trace is not None:
        trace.append({"kernel": k, "ellipses": n_ell})
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    for idx, e in enumerate(ellipses):
        inside = np.flatnonzero(e)
        if inside.size == 0:
            continue
        for _ in range(int(rng.integers(d_lo, d_hi + 1))):
            rows, cols = np.unravel_index(inside[rng.integers(inside.size, size=2)], (h, w))
            dx, dy = float(cols[1] - cols[0]), float(rows[1] - rows[0])
            shifted = bilinear_sample(out, xs - dx, ys - dy)
            out = np.where(e, (1 - drag_weight) * out + drag_weight * shifted, out)
            if trace is not None:
                trace.append({"ellipse": idx, "from": [int(cols[0]), int(rows[0])], "to": [int(cols[1]), int(rows[1])]})
    return _clip(out)


def edge_image(img) -> np.ndarray:
    """Mean of the max-normalized Sobel magnitude and 3x3 morphological gradient."""
    mag = np.hypot(ndimage.sobel(img, axis=1, mode="reflect"), ndimage.sobel(img, axis=0, mode="reflect"))
    grad = ndimage.grey_dilation(img, size=3, mode="reflect") - ndimage.grey_erosion(img, size=3, mode="reflect")
    parts = [p / p.max() if p.max() > 0 else p for p in (mag, grad)]
    return 0.5 * (parts[0] + parts[1])


def moisture(img, m: float, c: float = 1.0, b: float = 1.0, e: float = 1.0):
    """Wet prints gain contrast; dry prints brighten and pick up crack-like edges."""
    img = check_image(img)
    if not 0 <= m <= 1:
        raise AugmentError("moisture level must be in [0, 1]")
    if m == 0.5:
        return img.copy()
    if m > 0.5:
        return _clip(0.5 + (img - 0.5) * (1 + c * (m - 0.5)))
    out = _clip(img * (1 + b * (0.5 - m)))
    lam = min(max(e * (0.5 - m), 0.0), 1.0)
    return _clip((1 - lam) * out + lam * edge_image(out))
