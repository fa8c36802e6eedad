"""Synthetic ridge patterns used as test oracles and demo inputs."""
from __future__ import annotations

import numpy as np

__all__ = ["sinusoid_ridges", "synthetic_print"]


def sinusoid_ridges(h: int, w: int, theta: float, period: float, amplitude: float = 0.5,
                    phase: float = 0.0) -> np.ndarray:
    """Parallel sinusoidal ridges running along direction ``theta`` (radians)."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    across = -x * np.sin(theta) + y * np.cos(theta)
    return np.clip(0.5 + amplitude * np.cos(2 * np.pi * across / period + phase), 0.0, 1.0)


def synthetic_print(h: int = 128, w: int = 128, period: float = 8.0, seed: int = 0) -> np.ndarray:
    """A rolled-print stand-in: warped concentric ridges inside an elliptical pad.

    Ridges are dark on a light background, as on a scanned ink print.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    cy = h * rng.uniform(0.4, 0.6)
    cx = w * rng.uniform(0.4, 0.6)
    r = np.hypot((x - cx) * rng.uniform(0.8, 1.2), y - cy)
    warp = 3.0 * np.sin(2 * np.pi * x / (w * 0.7) + rng.uniform(0, 2 * np.pi))
    ridges = 0.5 + 0.5 * np.cos(2 * np.pi * (r + warp) / period)
    pad = ((x - w / 2) / (0.45 * w)) ** 2 + ((y - h / 2) / (0.48 * h)) ** 2 <= 1.0
    return np.where(pad, 1.0 - 0.85 * (1.0 - ridges), 1.0)
