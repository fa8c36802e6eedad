from dataclasses import replace

import numpy as np
import pytest

from latentfp.network import (TABLE_1, NetworkConfig, NonFiniteError, ShapeError, build_network, canonical_config,
                              count_params, enhance_image, scaled_config, train_step, validate_shapes)
from latentfp.ops import charbonnier_loss


def se_count(c, r=16):
    eff = max(d for d in range(1, min(r, c) + 1) if c % d == 0)
    h = c // eff
    return c * h + h + h * c + c


def expected_counts():
    """Parameter counts derived by hand from the block definitions."""
    conv = lambda ci, co: co * ci * 9 + co + 2 * co + se_count(co)  # noqa: E731  v, g, gamma/beta, SE
    up = lambda ci, co: co * ci * 4 + co + 2 * co + se_count(ci)  # noqa: E731  SE runs before the upconv
    dense = 2560 * 1024 * 9 + 2 * 1024 + 1024 * 1024 + 2 * 1024 + se_count(1024) + 4 * 1024 * 1024 + 1024
    gabor = 5 * 8 + se_count(8) + 3 * 64 + 64 + 8
    return {
        "R1": 2048 * 256 + 2048,
        "E1": conv(1, 32), "E2": conv(32, 64), "E3": conv(64, 128), "E4": conv(128, 256), "E5": conv(256, 512),
        "CF": 0, "M": dense,
        "D1": up(1024, 512), "D2": up(768, 256), "D3": up(384, 128), "D4": up(192, 64),
        "F": 64 * 9 + 1, "G": gabor,
    }


@pytest.fixture(scope="module")
def canonical():
    return build_network(canonical_config())


@pytest.fixture(scope="module")
def small():
    return build_network(scaled_config(16))


def test_canonical_parameter_counts(canonical):
    counts = count_params(canonical)
    assert counts["layers"] == expected_counts()
    assert counts["feature_extractor"] == 526_336
    assert counts["total"] == 33_951_292
    assert counts["total_with_extractor"] == 33_951_292 + 526_336
    assert counts["layers"]["M"] == 28_973_120 and counts["layers"]["G"] == 329


def test_validate_shapes_reports_table_joins():
    report = validate_shapes(build_network(materialize=False), (1, 1, 64, 64))
    assert report.joins["CF"] == {"parts": {"E5": 512, "R1": 2048}, "total": 2560}
    assert report.joins["D2"]["total"] == 768
    assert report.joins["D3"]["total"] == 384
    assert report.joins["D4"]["total"] == 192
    lines = report.summary_lines()
    assert "CF=2560 (E5 512 + R1 2048)" in lines
    assert "D2-in=768 (D1 512 + E4 256)" in lines
    assert "F=64->1" in lines and lines[-1] == "output=(1, 1, 64, 64)"
    shapes = {e["id"]: e["out_shape"] for e in report.layers}
    assert shapes["E5"] == (1, 512, 4, 4) and shapes["R1"] == (1, 2048, 4, 4) and shapes["M"] == (1, 1024, 4, 4)
    assert shapes["D4"] == (1, 64, 64, 64) and shapes["G"] == (1, 1, 64, 64)


@pytest.mark.parametrize("shape,match", [((1, 1, 63, 64), "divisible by 16"), ((1, 1, 16, 16), "too small"),
                                         ((1, 3, 64, 64), "1 input channel")])
def test_validate_shapes_rejects(shape, match):
    with pytest.raises(ShapeError, match=match):
        validate_shapes(build_network(materialize=False), shape)


def test_corrupted_table_names_layer_and_channels():
    layers = tuple(replace(s, in_channels=256) if s.id == "D3" else s for s in TABLE_1)
    with pytest.raises(ShapeError) as exc:
        build_network(NetworkConfig(layers=layers), materialize=False)
    assert exc.value.layer_id == "D3"
    assert "expects 256 input channels but receives 384" in str(exc.value)
    bad_skip = tuple(replace(s, skip_source="E9") if s.id == "D2" else s for s in TABLE_1)
    with pytest.raises(ShapeError, match="skip source E9"):
        build_network(NetworkConfig(layers=bad_skip), materialize=False)


def test_config_round_trip():
    cfg = scaled_config(8, seed=3, dropout=0.2)
    assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


def test_forward_shapes_and_intermediates(small):
    x = np.random.default_rng(0).random((2, 1, 32, 48)).astype(np.float32)
    y, acts = small.forward(x, return_intermediates=True)
    assert y.shape == (2, 1, 32, 48) and y.dtype == np.float32
    assert acts["CF"].shape == (2, 160, 2, 3)
    assert acts["F"].min() >= 0 and acts["F"].max() <= 1
    with pytest.raises(ShapeError):
        small.forward(np.zeros((1, 2, 32, 32)))


def test_forward_is_deterministic_and_dropout_seeded(small):
    x = np.random.default_rng(1).random((1, 1, 32, 32))
    assert np.array_equal(small.forward(x), small.forward(x))
    a = small.forward(x, training=True, seed=1)
    assert np.array_equal(a, small.forward(x, training=True, seed=1))
    assert not np.array_equal(a, small.forward(x, training=True, seed=2))


def test_non_finite_output_names_layer():
    net = build_network(scaled_config(16))
    net.blocks["E3"].params["g"][0] = np.nan
    with pytest.raises(NonFiniteError) as exc:
        net.forward(np.zeros((1, 1, 32, 32)))
    assert exc.value.layer_id == "E3"


def test_backward_covers_every_parameter(small):
    x = np.random.default_rng(2).random((1, 1, 32, 32)).astype(np.float32)
    y, cache = small.forward(x, return_cache=True)
    grads = small.backward(np.ones_like(y), cache)
    for lid, block in small.blocks.items():
        assert set(grads[lid]) == set(block.params)
        for name, g in grads[lid].items():
            assert g.shape == block.params[name].shape
            assert np.all(np.isfinite(g))


def test_end_to_end_gradient_matches_finite_differences():
    net = build_network(scaled_config(32, seed=4), dtype=np.float64)
    rng = np.random.default_rng(5)
    x = rng.random((1, 1, 32, 32))
    target = rng.random((1, 1, 32, 32))

    def loss():
        return charbonnier_loss(net.forward(x), target)[0]

    y, cache = net.forward(x, return_cache=True)
    grads = net.backward(charbonnier_loss(y, target)[1], cache)
    h = 1e-5
    checked = 0
    for lid, block in net.blocks.items():
        for name, arr in block.params.items():
            flat = arr.reshape(-1)
            g = grads[lid][name].reshape(-1)
            for i in rng.choice(flat.size, min(2, flat.size), replace=False):
                old = flat[i]
                flat[i] = old + h
                fp = loss()
                flat[i] = old - h
                fm = loss()
                flat[i] = old
                num = (fp - fm) / (2 * h)
                assert abs(num - g[i]) <= 1e-6 + 1e-3 * abs(num), (lid, name, i, num, g[i])
                checked += 1
    assert checked > 100


def test_train_step_reduces_loss():
    net = build_network(scaled_config(16, seed=1))
    rng = np.random.default_rng(0)
    x = rng.random((1, 1, 32, 32)).astype(np.float32)
    target = rng.random((1, 1, 32, 32)).astype(np.float32)
    first, _ = train_step(net, x, target, lr=1e-3)
    for _ in range(5):
        last, _ = train_step(net, x, target, lr=1e-3)
    assert last < first


def test_gabor_frequency_projected_after_step():
    net = build_network(scaled_config(16))
    g = net.blocks["G"]
    g.params["frequency"][:] = 0.49
    x = np.random.default_rng(0).random((1, 1, 32, 32)).astype(np.float32)
    train_step(net, x, np.zeros_like(x), lr=10.0)
    assert np.all(g.params["frequency"] <= 0.5) and np.all(g.params["frequency"] > 0)


def test_enhance_image_tiles_arbitrary_sizes(small):
    img = np.random.default_rng(3).random((50, 70))
    out = enhance_image(small, img, tile=32)
    assert out.shape == img.shape and out.dtype == np.float64
    assert np.all(np.isfinite(out))
