"""Acceptance criteria 1-8, each at its stated tolerance and time budget.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary so they survive output capture.
"""
import math
import time

import numpy as np
import pytest

from _oracles import angle_error_deg, noisy_ridges, normalized_correlation
from conftest import ACCEPTANCE_LINES
from latentfp import gradsuite
from latentfp.augment import AugmentSpec, OpSpec, run_pipeline
from latentfp.checkpoint import load_checkpoint, save_checkpoint
from latentfp.gabor import (apply_bank_batched, apply_bank_naive, bench_bank, enhance_classical,
                            estimate_orientation_field, estimate_ridge_frequency, gabor_kernels)
from latentfp.augment import (SHAPES, add_noise, adjust_brightness, dusting_powder, elastic_deform, moisture,
                              occlude, perlin, smear, texture_blend)
from latentfp.network import build_network, canonical_config, train_step, validate_shapes
from latentfp.ops import charbonnier_loss
from latentfp.synthetic import synthetic_print

# (id, in, out) transcribed from the architecture table
TABLE_1 = [
    ("R1", 1, 2048), ("E1", 1, 32), ("E2", 32, 64), ("E3", 64, 128), ("E4", 128, 256), ("E5", 256, 512),
    ("CF", 2560, 2560), ("M", 2560, 1024), ("D1", 1024, 512), ("D2", 768, 256), ("D3", 384, 128),
    ("D4", 192, 64), ("F", 64, 1), ("G", 1, 1),
]


def verdict(criterion: int, ok: bool, detail: str) -> None:
    line = f"C{criterion} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c1_channel_table():
    t0 = time.perf_counter()
    net = build_network(canonical_config(), materialize=False)
    report = validate_shapes(net, (1, 1, 64, 64))
    elapsed = time.perf_counter() - t0
    got = [(layer["id"], layer["in_channels"], layer["out_channels"]) for layer in report.layers]
    lines = report.summary_lines()
    expected_lines = ["CF=2560 (E5 512 + R1 2048)", "D2-in=768 (D1 512 + E4 256)", "D3-in=384 (D2 256 + E3 128)",
                      "D4-in=192 (D3 128 + E2 64)", "F=64->1"]
    ok = sorted(got) == sorted(TABLE_1) and all(x in lines for x in expected_lines) and elapsed < 1.0
    verdict(1, ok, f"{len(got)} layers match the channel table exactly; {elapsed:.2f}s (< 1 s)")


def test_c2_gradient_suite():
    t0 = time.perf_counter()
    report = gradsuite.run_suite(gradsuite.DEFAULT_SEEDS)
    elapsed = time.perf_counter() - t0
    ops = {r.op for r in report.results}
    worst = max(r.max_rel_err / r.tolerance for r in report.results)
    required = {"conv2d", "weight_norm", "instance_norm", "leaky_relu", "se_block", "se_attention",
                "charbonnier_loss", "gabor_layer"}
    ok = report.passed and required <= ops and len(gradsuite.DEFAULT_SEEDS) >= 3 and elapsed < 60
    verdict(2, ok, f"{len(report.results)} checks over seeds {gradsuite.DEFAULT_SEEDS}; "
                   f"worst err/tol {worst:.2e}; {elapsed:.1f}s (< 60 s)")


def test_c3_vectorization_oracle_and_speedup():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n, f = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        h, w = int(rng.integers(8, 40)), int(rng.integers(8, 40))
        k = int(rng.choice([3, 5, 7, 9]))
        x = rng.random((n, 1, h, w))
        bank = gabor_kernels(rng.uniform(0, np.pi, f), rng.uniform(0.05, 0.3, f), rng.uniform(1, 4, f),
                             rng.uniform(1, 4, f), k, dc_free=bool(rng.integers(2)))
        worst = max(worst, float(np.max(np.abs(apply_bank_batched(x, bank) - apply_bank_naive(x, bank)))))
    elapsed = time.perf_counter() - t0
    bench = bench_bank(512, 512, 8, reps=1)
    ok = worst <= 1e-5 and elapsed < 30 and bench.speedup >= 10 and bench.max_abs_diff <= 1e-5
    verdict(3, ok, f"20 cases max-abs {worst:.1e} (<= 1e-5) in {elapsed:.1f}s; 512x512x8 naive "
                   f"{bench.naive_median_s:.2f}s batched {bench.batched_median_s:.3f}s speedup {bench.speedup:.0f}x")


def test_c4_classical_enhancement():
    t0 = time.perf_counter()
    improved, worst_angle, worst_freq = 0, 0.0, 0.0
    for deg in (0, 30, 60, 90, 120, 150):
        for period in (5, 8, 12):
            clean, noisy = noisy_ridges(math.radians(deg), period, sigma=0.2, seed=deg * 100 + period)
            out = enhance_classical(noisy)
            improved += normalized_correlation(out, clean) > normalized_correlation(noisy, clean)
            field = estimate_orientation_field(noisy)
            freq = estimate_ridge_frequency(noisy, field)
            worst_angle = max(worst_angle, float(angle_error_deg(field.angles[1:-1, 1:-1], math.radians(deg)).max()))
            worst_freq = max(worst_freq, float(np.abs(freq.freqs[1:-1, 1:-1] * period - 1).max()))
    elapsed = time.perf_counter() - t0
    ok = improved >= 17 and worst_angle < 2.0 and worst_freq < 0.10 and elapsed < 120
    verdict(4, ok, f"{improved}/18 improved (>= 17); orientation {worst_angle:.2f} deg (< 2); "
                   f"frequency {100 * worst_freq:.1f}% (< 10%); {elapsed:.1f}s")


def _eight_ops(img, seed, identity=False):
    tex = perlin(img.shape[1], img.shape[0], 8, 3, seed=1)
    if identity:
        return [
            texture_blend(img, tex, 0.0, 0.5, seed), elastic_deform(img, 0.0, 8.0, seed),
            add_noise(img, "gaussian", seed, sigma=0.0), add_noise(img, "salt_pepper", seed, p=0.0),
            add_noise(img, "speckle", seed, sigma=0.0), dusting_powder(img, 16, 0.0, seed),
            adjust_brightness(img, 1.0), occlude(img, SHAPES, (0, 0), seed),
            smear(img, 9, (0, 0), (1, 3), seed), moisture(img, 0.5),
        ]
    return [
        texture_blend(img, tex, 0.6, 0.5, seed), elastic_deform(img, 4.0, 8.0, seed),
        add_noise(img, "gaussian", seed, sigma=0.1), add_noise(img, "salt_pepper", seed, p=0.1),
        add_noise(img, "speckle", seed, sigma=0.2), dusting_powder(img, 16, 0.4, seed),
        adjust_brightness(img, 1.2), occlude(img, SHAPES, (1, 5), seed),
        smear(img, 9, (1, 3), (1, 3), seed), moisture(img, 0.2),
    ]


def test_c5_augmentation_determinism_and_identities():
    t0 = time.perf_counter()
    img = synthetic_print(96, 96, seed=4)
    deterministic = all(a.tobytes() == b.tobytes() for a, b in zip(_eight_ops(img, 13), _eight_ops(img, 13)))
    identities = all(np.array_equal(out, img) for out in _eight_ops(img, 13, identity=True))
    spec = AugmentSpec(tuple(OpSpec(n, {}) for n in ("texture_blend", "elastic_deform", "add_noise",
                                                      "dusting_powder", "adjust_brightness", "occlude", "smear",
                                                      "moisture")), master_seed=21)
    p1, p2 = run_pipeline(img, spec)[0], run_pipeline(img, spec)[0]
    elapsed = time.perf_counter() - t0
    ok = deterministic and identities and p1.tobytes() == p2.tobytes() and elapsed < 60
    verdict(5, ok, f"byte-identical reruns {deterministic}; exact identity points {identities}; "
                   f"pipeline reproducible {p1.tobytes() == p2.tobytes()}; {elapsed:.1f}s")


def test_c6_smoke_training():
    t0 = time.perf_counter()
    net = build_network(canonical_config(seed=0))
    clean = synthetic_print(32, 32, period=6.0, seed=0)
    spec = AugmentSpec((OpSpec("add_noise", {"sigma": 0.15}), OpSpec("dusting_powder", {"intensity": 0.4}),
                        OpSpec("occlude", {"count_range": [1, 2]})), master_seed=7)
    noisy, _ = run_pipeline(clean, spec)
    x = noisy[None, None].astype(np.float32)
    y = clean[None, None].astype(np.float32)
    names = {(lid, name) for lid, block in net.blocks.items() for name in block.params}
    losses, all_finite, covered = [], True, True
    for step in range(50):
        loss, grads = train_step(net, x, y, lr=1e-3)
        losses.append(loss)
        if step == 0:
            got = {(lid, name) for lid, g in grads.items() for name in g}
            covered = got == names
        all_finite &= all(np.all(np.isfinite(g)) for gs in grads.values() for g in gs.values())
    final = charbonnier_loss(net.forward(x), y)[0]
    reduction = 1 - final / losses[0]
    elapsed = time.perf_counter() - t0
    ok = reduction >= 0.20 and all_finite and covered and elapsed < 300
    verdict(6, ok, f"loss {losses[0]:.4f} -> {final:.4f} ({100 * reduction:.0f}% reduction, >= 20%); "
                   f"{len(names)} tensors, gradients finite {all_finite}; {elapsed:.0f}s (< 300 s)")


def test_c7_charbonnier_contract():
    rng = np.random.default_rng(77)
    exact = True
    for eps in (1e-3, 1e-2, 0.1, 1.0):
        a = rng.random((3, 5))
        exact &= charbonnier_loss(a, a, eps)[0] == eps
    sym = True
    for _ in range(20):
        a, b = rng.random((4, 4)), rng.random((4, 4))
        sym &= charbonnier_loss(a, b)[0] == charbonnier_loss(b, a)[0]
    results = [r for seed in range(20) for r in gradsuite.run_case("charbonnier_loss", seed)]
    worst = max(r.max_rel_err for r in results)
    ok = exact and sym and worst < 1e-6
    verdict(7, ok, f"L(a,a)==eps exact {exact}; symmetric {sym}; FD rel-err {worst:.1e} (< 1e-6) on 20 pairs")


def test_c8_checkpoint_round_trip(tmp_path):
    net = build_network(canonical_config(seed=5))
    path = tmp_path / "canonical.ckpt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    rng = np.random.default_rng(8)
    same = 0
    for _ in range(5):
        x = rng.random((1, 1, 32, 32)).astype(np.float32)
        same += np.array_equal(net.forward(x), back.forward(x))
    verdict(8, same == 5, f"{same}/5 forwards bit-identical after save/load ({path.stat().st_size} bytes)")


@pytest.fixture(scope="module", autouse=True)
def _reset_lines():
    ACCEPTANCE_LINES.clear()
    yield
