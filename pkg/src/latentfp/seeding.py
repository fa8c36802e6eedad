"""Portable 64-bit seed derivation (SplitMix64 finalizer)."""
from __future__ import annotations

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Fold integers into a master seed; the same inputs give the same seed on every platform."""
    s = splitmix64(master & MASK64)
    for p in path:
        s = splitmix64(s ^ (p & MASK64))
    return s
