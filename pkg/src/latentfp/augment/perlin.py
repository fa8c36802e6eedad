"""Classic gradient-lattice Perlin noise."""
from __future__ import annotations

import numpy as np

__all__ = ["perlin", "perlin_raw", "fade"]


def fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def _octave(h: int, w: int, cell: float, rng) -> np.ndarray:
    gh, gw = int(np.floor((h - 1) / cell)) + 2, int(np.floor((w - 1) / cell)) + 2
    ang = rng.uniform(0.0, 2 * np.pi, size=(gh, gw))
    gx, gy = np.cos(ang), np.sin(ang)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = xs / cell, ys / cell
    i0, j0 = np.floor(u).astype(np.intp), np.floor(v).astype(np.intp)
    fu, fv = u - i0, v - j0

    def corner(di, dj):
        return gx[j0 + dj, i0 + di] * (fu - di) + gy[j0 + dj, i0 + di] * (fv - dj)

    su, sv = fade(fu), fade(fv)
    top = corner(0, 0) + su * (corner(1, 0) - corner(0, 0))
    bot = corner(0, 1) + su * (corner(1, 1) - corner(0, 1))
    return top + sv * (bot - top)


def perlin_raw(w: int, h: int, cell: float, octaves: int = 1, seed: int = 0) -> np.ndarray:
    """Unnormalized octave sum; octave ``o`` uses lattice ``cell / 2**o`` and weight ``0.5**o``.

    The value at every multiple of ``cell`` is exactly zero.
    """
    if cell < 2:
        raise ValueError(f"perlin cell must be >= 2 px, got {cell}")
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.zeros((h, w))
    for o in range(octaves):
        out += 0.5**o * _octave(h, w, cell / 2**o, rng)
    return out


def perlin(w: int, h: int, cell: float, octaves: int = 1, seed: int = 0) -> np.ndarray:
    """Perlin field min-max normalized to [0, 1] (constant 0.5 if flat)."""
    raw = perlin_raw(w, h, cell, octaves, seed)
    lo, hi = raw.min(), raw.max()
    if hi <= lo:
        return np.full((h, w), 0.5)
    return (raw - lo) / (hi - lo)
