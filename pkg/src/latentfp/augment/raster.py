"""Minimal deterministic rasterizer for occlusion and smear masks.

All functions return boolean ``(h, w)`` coverage masks sampled at pixel
centres, so results never depend on drawing order or a font stack.
"""
from __future__ import annotations

import numpy as np

__all__ = ["ellipse_mask", "rect_mask", "polyline_mask", "bezier_points", "random_walk_points", "text_mask",
           "FONT_5X7"]

# 5x7 glyphs, one 5-bit row per entry (MSB = leftmost column)
FONT_5X7 = {
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
}


def _grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def ellipse_mask(h: int, w: int, cx: float, cy: float, a: float, b: float, angle: float = 0.0) -> np.ndarray:
    """Filled ellipse with semi-axes ``a`` (along ``angle``) and ``b``."""
    if a <= 0 or b <= 0:
        return np.zeros((h, w), dtype=bool)
    xs, ys = _grid(h, w)
    dx, dy = xs - cx, ys - cy
    c, s = np.cos(angle), np.sin(angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def rect_mask(h: int, w: int, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Filled axis-aligned rectangle covering pixel centres in [x0, x1] x [y0, y1]."""
    xs, ys = _grid(h, w)
    return (xs >= min(x0, x1)) & (xs <= max(x0, x1)) & (ys >= min(y0, y1)) & (ys <= max(y0, y1))


def polyline_mask(h: int, w: int, points, thickness: float = 1.0) -> np.ndarray:
    """Pixels whose centre lies within ``thickness / 2`` of any segment."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    out = np.zeros((h, w), dtype=bool)
    r = max(thickness / 2.0, 0.5)
    for (xa, ya), (xb, yb) in zip(pts[:-1], pts[1:]):
        x_lo = max(int(np.floor(min(xa, xb) - r)), 0)
        x_hi = min(int(np.ceil(max(xa, xb) + r)), w - 1)
        y_lo = max(int(np.floor(min(ya, yb) - r)), 0)
        y_hi = min(int(np.ceil(max(ya, yb) + r)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        ys, xs = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1].astype(np.float64)
        ex, ey = xb - xa, yb - ya
        ll = ex * ex + ey * ey
        t = np.zeros_like(xs) if ll == 0 else np.clip(((xs - xa) * ex + (ys - ya) * ey) / ll, 0.0, 1.0)
        d2 = (xs - xa - t * ex) ** 2 + (ys - ya - t * ey) ** 2
        out[y_lo : y_hi + 1, x_lo : x_hi + 1] |= d2 <= r * r
    return out


def bezier_points(p0, p1, p2, n: int = 64) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2))
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def random_walk_points(rng, start, n_steps: int, step: float, turn_sigma: float = 0.5) -> np.ndarray:
    """Smooth random walk: heading drifts by N(0, turn_sigma) radians per step."""
    heading = rng.uniform(0.0, 2 * np.pi)
    turns = np.cumsum(rng.normal(0.0, turn_sigma, size=n_steps)) + heading
    steps = np.stack([np.cos(turns), np.sin(turns)], axis=1) * step
    return np.vstack([np.asarray(start, dtype=np.float64)[None], np.asarray(start) + np.cumsum(steps, axis=0)])


def text_mask(h: int, w: int, text: str, x: int, y: int, scale: int = 1) -> np.ndarray:
    """Render ``text`` with the built-in font; top-left corner at (x, y), 1 px spacing."""
    out = np.zeros((h, w), dtype=bool)
    cursor = x
    for ch in text.upper():
        rows = FONT_5X7.get(ch)
        if rows is not None:
            glyph = np.array([[(r >> (4 - c)) & 1 for c in range(5)] for r in rows], dtype=bool)
            glyph = np.kron(glyph, np.ones((scale, scale), dtype=bool))
            gy0, gx0 = max(y, 0), max(cursor, 0)
            gy1, gx1 = min(y + glyph.shape[0], h), min(cursor + glyph.shape[1], w)
            if gy0 < gy1 and gx0 < gx1:
                out[gy0:gy1, gx0:gx1] |= glyph[gy0 - y : gy1 - y, gx0 - cursor : gx1 - cursor]
        cursor += 6 * scale
    return out
