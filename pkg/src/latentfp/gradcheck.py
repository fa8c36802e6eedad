"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = ["GradCheckReport", "grad_check", "rel_error"]


@dataclass
class GradCheckReport:
    max_rel_err: float
    failing_index: tuple | None
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.failing_index is None


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(loss_fn: Callable[[], float], inputs: Mapping[str, np.ndarray],
               analytic: Mapping[str, np.ndarray], fd_step: float = 1e-6, tolerance: float = 1e-4,
               max_coords: int | None = None, rng=None, order: int = 2) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    ``loss_fn`` takes no arguments and reads the arrays in ``inputs``, which
    are perturbed in place and restored. ``max_coords`` caps the number of
    coordinates probed per input (chosen at random with ``rng``); ``None``
    checks every coordinate. The failing index is ``(name, flat_index)`` of
    the worst coordinate when it exceeds ``tolerance``.

    ``order=4`` uses the five-point central stencil, whose O(h^4) truncation
    error allows a larger ``fd_step`` and hence far less cancellation noise.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = np.random.default_rng(rng)
    worst = 0.0
    worst_at = None
    count = 0
    for name, arr in inputs.items():
        if arr.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 inputs, {name} is {arr.dtype}")
        grad = np.asarray(analytic[name])
        if grad.shape != arr.shape:
            raise ValueError(f"analytic gradient for {name} has shape {grad.shape}, expected {arr.shape}")
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ValueError(f"input {name} must be contiguous to be perturbed in place")
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
        gflat = grad.reshape(-1)
        for i in coords:
            old = flat[i]
            vals = []
            for k in ((1, -1) if order == 2 else (1, -1, 2, -2)):
                flat[i] = old + k * fd_step
                vals.append(loss_fn())
            flat[i] = old
            if not (np.all(np.isfinite(vals)) and np.isfinite(gflat[i])):
                raise FloatingPointError(f"non-finite value while checking {name}[{i}]")
            if order == 2:
                numeric = (vals[0] - vals[1]) / (2 * fd_step)
            else:
                numeric = (8 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12 * fd_step)
            err = float(rel_error(gflat[i], numeric))
            count += 1
            if err > worst:
                worst = err
                worst_at = (name, int(i))
    return GradCheckReport(worst, worst_at if worst > tolerance else None, tolerance, count)
