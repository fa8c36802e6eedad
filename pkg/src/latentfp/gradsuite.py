"""Finite-difference checks for every differentiable operator.

Each case draws float64 inputs from a seed, contracts the operator output
with a random upstream tensor to get a scalar loss, and compares the
analytic backward pass with central differences. ``fault`` names a case
whose analytic gradients are deliberately scaled, to prove the harness
can fail.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import ops
from .gabor_layer import GABOR_KEYS, LearnableGaborLayer, stretch_per_sample, stretch_per_sample_backward
from .gradcheck import GradCheckReport, grad_check

__all__ = ["CaseResult", "SuiteReport", "CASES", "run_case", "run_suite", "DEFAULT_SEEDS"]

DEFAULT_SEEDS = (0, 1, 2)
TOL = 1e-4
GABOR_TOL = 1e-3
CHARBONNIER_TOL = 1e-6
# five-point stencil with a coarse step keeps cancellation noise far below the
# tolerances; Charbonnier is sharply curved near d = 0 and needs a fine step
FD = {"order": 4, "fd_step": 1e-3}
FD_CHARBONNIER = {"order": 4, "fd_step": 1e-6}
FAULT_SCALE = 1.05


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin, x)


def _separated_extremes(rng, shape):
    """Samples in [0.1, 0.9] plus one exact 0 and one exact 1 each, so the
    min/max used by the stretch cannot swap under a finite-difference step."""
    x = rng.uniform(0.1, 0.9, shape)
    flat = x.reshape(shape[0], -1)
    for row in flat:
        i, j = rng.choice(row.size, 2, replace=False)
        row[i], row[j] = 0.0, 1.0
    return x


def _projected(forward: Callable, inputs: dict, rng):
    """Wrap ``forward() -> (out, cache)`` as a scalar loss sum(out * G)."""
    out, _ = forward()
    g = rng.standard_normal(out.shape)
    return (lambda: float(np.sum(forward()[0] * g))), g


def _case_conv2d(rng):
    x = rng.standard_normal((2, 3, 9, 9))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    inputs = {"x": x, "w": w, "b": b}
    fwd = lambda: ops.conv2d_forward(x, w, b, stride=2, dilation=2, pad=2)  # noqa: E731
    loss, g = _projected(fwd, inputs, rng)
    dx, dw, db = ops.conv2d_backward(g, fwd()[1])
    return [(loss, inputs, {"x": dx, "w": dw, "b": db}, TOL)]


def _case_conv_transpose(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    w = rng.standard_normal((2, 3, 2, 2))
    b = rng.standard_normal(2)
    inputs = {"x": x, "w": w, "b": b}
    fwd = lambda: ops.conv_transpose_forward(x, w, b)  # noqa: E731
    loss, g = _projected(fwd, inputs, rng)
    dx, dw, db = ops.conv_transpose_backward(g, fwd()[1])
    return [(loss, inputs, {"x": dx, "w": dw, "b": db}, TOL)]


def _case_weight_norm(rng):
    v = rng.standard_normal((3, 2, 3, 3))
    gain = rng.standard_normal(3)
    inputs = {"v": v, "g": gain}
    fwd = lambda: ops.weight_norm_forward(v, gain)  # noqa: E731
    loss, g = _projected(fwd, inputs, rng)
    dv, dg = ops.weight_norm_backward(g, fwd()[1])
    return [(loss, inputs, {"v": dv, "g": dg}, TOL)]


def _case_instance_norm(rng):
    x = rng.standard_normal((2, 3, 5, 5)) * 2 + 1
    gamma, beta = rng.standard_normal(3), rng.standard_normal(3)
    inputs = {"x": x, "gamma": gamma, "beta": beta}
    fwd = lambda: ops.instance_norm_forward(x, gamma, beta)  # noqa: E731
    loss, g = _projected(fwd, inputs, rng)
    dx, dgamma, dbeta = ops.instance_norm_backward(g, fwd()[1])
    return [(loss, inputs, {"x": dx, "gamma": dgamma, "beta": dbeta}, TOL)]


def _case_leaky_relu(rng):
    x = _away_from_zero(rng, (2, 3, 4, 4))
    fwd = lambda: ops.leaky_relu_forward(x)  # noqa: E731
    loss, g = _projected(fwd, {"x": x}, rng)
    return [(loss, {"x": x}, {"x": ops.leaky_relu_backward(g, fwd()[1])}, TOL)]


def _case_dropout(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    seed = int(rng.integers(2**32))
    fwd = lambda: ops.dropout_forward(x, 0.3, seed, training=True)  # noqa: E731
    loss, g = _projected(fwd, {"x": x}, rng)
    return [(loss, {"x": x}, {"x": ops.dropout_backward(g, fwd()[1])}, TOL)]


def _random_se(rng, c, hidden_scale=0.5):
    p = ops.init_se_attention_params(c, 2, rng, np.float64)
    return {k: rng.standard_normal(v.shape) * hidden_scale for k, v in p.items()}


def _case_se_block(rng):
    x = rng.standard_normal((2, 4, 5, 5))
    p = {k: v for k, v in _random_se(rng, 4).items() if k in ("w1", "b1", "w2", "b2")}
    fwd = lambda: ops.se_block_forward(x, p)  # noqa: E731
    inputs = {"x": x, **p}
    loss, g = _projected(fwd, inputs, rng)
    dx, grads = ops.se_block_backward(g, fwd()[1])
    return [(loss, inputs, {"x": dx, **grads}, TOL)]


def _case_se_attention(rng):
    x = rng.standard_normal((2, 4, 4, 4))
    p = _random_se(rng, 4)
    fwd = lambda: ops.se_attention_forward(x, p)  # noqa: E731
    inputs = {"x": x, **p}
    loss, g = _projected(fwd, inputs, rng)
    dx, grads = ops.se_attention_backward(g, fwd()[1])
    return [(loss, inputs, {"x": dx, **grads}, TOL)]


def _case_charbonnier(rng):
    pred = rng.uniform(0, 1, (2, 1, 4, 4))
    target = rng.uniform(0, 1, (2, 1, 4, 4))
    loss = lambda: ops.charbonnier_loss(pred, target)[0]  # noqa: E731
    return [(loss, {"pred": pred}, {"pred": ops.charbonnier_loss(pred, target)[1]}, CHARBONNIER_TOL)]


def _case_stretch(rng):
    x = _separated_extremes(rng, (2, 1, 5, 5)) * 3 - 1
    fwd = lambda: stretch_per_sample(x)  # noqa: E731
    loss, g = _projected(fwd, {"x": x}, rng)
    return [(loss, {"x": x}, {"x": stretch_per_sample_backward(g, fwd()[1])}, TOL)]


def _case_gabor(rng):
    layer = LearnableGaborLayer(n_filters=4, ksize=7, frequency=0.15, sigma=2.0, reduction=2, rng=rng,
                                dtype=np.float64)
    p = layer.params
    p["theta"] += rng.uniform(-0.2, 0.2, 4)
    p["frequency"] += rng.uniform(-0.03, 0.03, 4)
    p["log_sigma_x"] += rng.uniform(-0.2, 0.2, 4)
    p["log_sigma_y"] += rng.uniform(-0.2, 0.2, 4)
    p["mix"][:] = rng.standard_normal(4)
    for name, arr in _random_se(rng, 4).items():
        p["attn." + name][...] = arr
    x = _separated_extremes(rng, (2, 1, 8, 8))
    fwd = lambda: layer.forward(x)  # noqa: E731
    loss, g = _projected(fwd, {"x": x, **p}, rng)
    dx, grads = layer.backward(g, fwd()[1])
    kernel = {k: p[k] for k in GABOR_KEYS}
    rest = {"x": x, **{k: v for k, v in p.items() if k not in GABOR_KEYS}}
    return [
        (loss, kernel, {k: grads[k] for k in kernel}, GABOR_TOL),
        (loss, rest, {"x": dx, **{k: grads[k] for k in rest if k != "x"}}, TOL),
    ]


CASES: dict[str, Callable] = {
    "conv2d": _case_conv2d,
    "conv_transpose": _case_conv_transpose,
    "weight_norm": _case_weight_norm,
    "instance_norm": _case_instance_norm,
    "leaky_relu": _case_leaky_relu,
    "dropout": _case_dropout,
    "se_block": _case_se_block,
    "se_attention": _case_se_attention,
    "charbonnier_loss": _case_charbonnier,
    "contrast_stretch": _case_stretch,
    "gabor_layer": _case_gabor,
}


@dataclass
class CaseResult:
    op: str
    seed: int
    max_rel_err: float
    tolerance: float
    failing_index: tuple | None
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.failing_index is None


@dataclass
class SuiteReport:
    results: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failing_ops(self) -> list[str]:
        return sorted({r.op for r in self.results if not r.passed})

    def to_dict(self) -> dict:
        return {"passed": self.passed, "seconds": self.seconds, "failing_ops": self.failing_ops(),
                "results": [dict(asdict(r), passed=r.passed) for r in self.results]}


def run_case(op: str, seed: int, fault: bool = False, max_coords: int | None = 48) -> list[CaseResult]:
    """Check one operator on one seed; a case may contain several tolerance groups."""
    rng = np.random.default_rng(seed)
    out = []
    for loss, inputs, analytic, tol in CASES[op](rng):
        if fault:
            analytic = {k: v * FAULT_SCALE for k, v in analytic.items()}
        fd = FD_CHARBONNIER if op == "charbonnier_loss" else FD
        rep: GradCheckReport = grad_check(loss, inputs, analytic, tolerance=tol, max_coords=max_coords,
                                          rng=seed, **fd)
        out.append(CaseResult(op, seed, rep.max_rel_err, tol, rep.failing_index, rep.n_checked))
    return out


def run_suite(seeds=DEFAULT_SEEDS, ops_=None, fault: str | None = None) -> SuiteReport:
    if fault is not None and fault not in CASES:
        raise KeyError(f"unknown operator {fault!r}; expected one of {sorted(CASES)}")
    start = time.perf_counter()
    results = []
    for op in ops_ or CASES:
        for seed in seeds:
            results.extend(run_case(op, seed, fault == op))
    return SuiteReport(results, time.perf_counter() - start)
