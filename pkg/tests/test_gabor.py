import math

import numpy as np
import pytest
from _oracles import angle_error_deg, correlate_loops, gabor_pixel, noisy_ridges, normalized_correlation
from hypothesis import given
from hypothesis import strategies as st

from latentfp.gabor import (GaborBank, GaborParams, apply_bank_batched, apply_bank_naive, bench_bank, build_bank,
                            enhance_classical, estimate_orientation_field, estimate_ridge_frequency, gabor_kernel,
                            gabor_kernels, ridge_signature, wrap_angle)
from latentfp.image import ImageError
from latentfp.synthetic import sinusoid_ridges


def test_kernel_matches_pointwise_formula():
    p = GaborParams(theta=0.7, frequency=0.12, sigma_x=3.0, sigma_y=5.0, ksize=9)
    k = gabor_kernel(p)
    for i in range(9):
        for j in range(9):
            assert k[i, j] == pytest.approx(gabor_pixel(j - 4, i - 4, 0.7, 0.12, 3.0, 5.0), abs=1e-14)


def test_kernel_symmetries():
    k = gabor_kernel(GaborParams(0.3, 0.1, 4.0, 2.0, 15))
    # even-symmetric under point reflection
    assert np.allclose(k, k[::-1, ::-1], atol=1e-14)
    assert k[7, 7] == 1.0
    dc = gabor_kernel(GaborParams(0.3, 0.1, 4.0, 2.0, 15), dc_free=True)
    assert abs(dc.sum()) < 1e-12


def test_kernel_theta_plus_pi_is_identical():
    a = gabor_kernels(0.4, 0.1, 3.0, 3.0, 11)
    b = gabor_kernels(0.4 + math.pi, 0.1, 3.0, 3.0, 11)
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(theta=math.pi, frequency=0.1, sigma_x=1, sigma_y=1, ksize=3),
    dict(theta=0, frequency=0.0, sigma_x=1, sigma_y=1, ksize=3),
    dict(theta=0, frequency=0.6, sigma_x=1, sigma_y=1, ksize=3),
    dict(theta=0, frequency=0.1, sigma_x=0, sigma_y=1, ksize=3),
    dict(theta=0, frequency=0.1, sigma_x=1, sigma_y=1, ksize=4),
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        GaborParams(**kwargs)


def test_build_bank_order_and_wrapping():
    bank = build_bank([5, 7], [0.0, math.pi + 0.5], [0.1], [2.0, (1.0, 3.0)])
    assert len(bank) == 8
    assert [p.ksize for p in bank.filters] == [5] * 4 + [7] * 4
    assert bank.filters[2].theta == pytest.approx(0.5)
    assert (bank.filters[1].sigma_x, bank.filters[1].sigma_y) == (1.0, 3.0)
    st_ = bank.stacked()
    assert st_.shape == (8, 7, 7)
    assert np.all(st_[0, 0] == 0)  # 5x5 kernel zero-padded into 7x7
    with pytest.raises(ValueError):
        build_bank([], [0.0], [0.1], [1.0])


@given(st.floats(-10, 10, allow_nan=False))
def test_wrap_angle_range(t):
    w = float(wrap_angle(t))
    assert 0 <= w < math.pi
    assert angle_error_deg(w, t) < 1e-9


# -- bank application ---------------------------------------------------------------


def test_batched_matches_python_loops():
    rng = np.random.default_rng(0)
    img = rng.random((9, 11))
    kernels = rng.standard_normal((2, 5, 5))
    out = apply_bank_batched(img[None, None], kernels)
    for f in range(2):
        np.testing.assert_allclose(out[0, f], correlate_loops(img, kernels[f]), atol=1e-12)


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 20), st.integers(1, 20),
       st.sampled_from([1, 3, 5, 7]), st.integers(0, 2**31))
def test_batched_equals_naive(n, f, h, w, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 1, h, w))
    kernels = rng.standard_normal((f, k, k))
    np.testing.assert_allclose(apply_bank_batched(x, kernels), apply_bank_naive(x, kernels), atol=1e-10)


def test_batched_independent_of_worker_count():
    rng = np.random.default_rng(1)
    x = rng.random((4, 1, 16, 16))
    bank = build_bank([7], [0.0, 1.0], [0.1], [2.0])
    one = apply_bank_batched(x, bank, workers=1)
    assert np.array_equal(one, apply_bank_batched(x, bank, workers=3))
    assert np.array_equal(one[2:3], apply_bank_batched(x[2:3], bank))


def test_bank_input_validation():
    with pytest.raises(ValueError):
        apply_bank_batched(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3)))
    with pytest.raises(ValueError):
        apply_bank_batched(np.zeros((1, 1, 4, 4)), np.zeros((1, 4, 4)))
    with pytest.raises(ImageError):
        apply_bank_naive(np.zeros((1, 4, 4)), np.zeros((1, 3, 3)))


def test_bench_report_fields():
    rep = bench_bank(24, 20, n_filters=2, batch=2, reps=2, ksize=5)
    assert (rep.height, rep.width, rep.n_filters, rep.batch) == (24, 20, 2, 2)
    assert len(rep.naive_s) == 2 and rep.speedup > 0
    assert rep.max_abs_diff < 1e-10
    assert '"speedup"' in rep.to_json()


# -- orientation and frequency ----------------------------------------------------------


@pytest.mark.parametrize("deg", [0, 15, 45, 90, 135, 170])
@pytest.mark.parametrize("period", [6.0, 10.0])
def test_orientation_of_clean_ridges(deg, period):
    img = sinusoid_ridges(128, 128, math.radians(deg), period)
    field = estimate_orientation_field(img)
    interior = field.angles[1:-1, 1:-1]
    assert angle_error_deg(interior, math.radians(deg)).max() < 2.0
    assert field.coherence[1:-1, 1:-1].min() > 0.9


@given(st.floats(0, math.pi - 1e-6), st.floats(5, 12))
def test_orientation_transpose_equivariance(theta, period):
    img = sinusoid_ridges(64, 64, theta, period)
    a = estimate_orientation_field(img).angles
    b = estimate_orientation_field(img.T).angles
    # swapping axes reflects directions about the diagonal: theta -> pi/2 - theta
    assert angle_error_deg(b.T, np.pi / 2 - a).max() < 1e-6


def test_orientation_of_flat_image_has_zero_coherence():
    field = estimate_orientation_field(np.full((48, 48), 0.4))
    assert np.all(field.coherence == 0)
    with pytest.raises(ImageError):
        estimate_orientation_field(np.zeros((8, 8)))


@pytest.mark.parametrize("period", [4.0, 7.0, 11.0, 16.0])
def test_frequency_of_clean_ridges(period):
    img = sinusoid_ridges(128, 128, math.radians(30), period)
    field = estimate_orientation_field(img)
    freq = estimate_ridge_frequency(img, field, window=48)
    interior = freq.freqs[1:-1, 1:-1]
    assert np.all(np.abs(interior * period - 1) < 0.01)


def test_signature_samples_across_ridges():
    img = sinusoid_ridges(64, 64, 0.0, 8.0)  # horizontal ridges: intensity varies with y
    sig = ridge_signature(img, 32, 32, 0.0, 16, 8)
    ys = 32 + np.arange(16) - 7.5  # half-pixel rows: bilinear averages the two neighbours
    row = lambda y: 0.5 + 0.5 * np.cos(2 * np.pi * y / 8)  # noqa: E731
    np.testing.assert_allclose(sig, 0.5 * (row(ys - 0.5) + row(ys + 0.5)), atol=1e-12)


def test_frequency_zero_on_flat_blocks():
    img = np.full((64, 64), 0.5)
    freq = estimate_ridge_frequency(img, estimate_orientation_field(img))
    assert not freq.freqs.any()


# -- classical enhancement -----------------------------------------------------------------


@pytest.mark.parametrize("deg,period", [(0, 8), (60, 5), (120, 12)])
def test_enhancement_improves_correlation(deg, period):
    clean, noisy = noisy_ridges(math.radians(deg), period, seed=deg)
    out = enhance_classical(noisy)
    assert out.shape == noisy.shape and out.min() >= 0 and out.max() <= 1
    assert normalized_correlation(out, clean) > normalized_correlation(noisy, clean) + 0.05


def test_enhancement_degenerate_input_passes_through():
    img = np.full((32, 32), 0.7)
    out = enhance_classical(img)
    assert np.array_equal(out, img) and out is not img


def test_enhancement_is_deterministic():
    _, noisy = noisy_ridges(0.5, 8, size=64)
    assert np.array_equal(enhance_classical(noisy), enhance_classical(noisy))


def test_orientation_rejects_nonpositive_grad_sigma():
    with pytest.raises(ValueError):
        estimate_orientation_field(np.zeros((32, 32)), grad_sigma=0.0)
