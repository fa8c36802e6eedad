import json
import struct
import zlib

import numpy as np
import pytest

from latentfp.checkpoint import MAGIC, CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, \
    save_checkpoint
from latentfp.network import build_network, scaled_config


def test_golden_fixture_loads_and_reproduces_output(fixtures):
    net = load_checkpoint(fixtures / "scaled16.ckpt")
    assert net.cfg == scaled_config(16, seed=0)
    x = np.load(fixtures / "scaled16_input.npy")
    np.testing.assert_allclose(net.forward(x), np.load(fixtures / "scaled16_output.npy"), atol=1e-6)
    # re-encoding the loaded network gives the same bytes
    assert encode_checkpoint(net) == (fixtures / "scaled16.ckpt").read_bytes()


def test_golden_fixture_layout(fixtures):
    data = (fixtures / "scaled16.ckpt").read_bytes()
    assert data[:8] == MAGIC
    assert struct.unpack("<I", data[8:12])[0] == 1
    (cfg_len,) = struct.unpack("<I", data[12:16])
    cfg = json.loads(data[16 : 16 + cfg_len])
    assert [layer["id"] for layer in cfg["layers"]][:3] == ["R1", "E1", "E2"]
    (n_records,) = struct.unpack("<I", data[16 + cfg_len : 20 + cfg_len])
    assert n_records == 13  # every layer except the parameter-free concat
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_round_trip_is_bit_identical(tmp_path):
    net = build_network(scaled_config(16, seed=9))
    save_checkpoint(net, tmp_path / "n.ckpt")
    back = load_checkpoint(tmp_path / "n.ckpt")
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = rng.random((1, 1, 32, 32)).astype(np.float32)
        assert np.array_equal(net.forward(x), back.forward(x))


def _rewrite(data: bytes, body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body))


def test_rejects_bad_inputs(fixtures, tmp_path):
    data = (fixtures / "scaled16.ckpt").read_bytes()
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError, match="version"):
        decode_checkpoint(data[:8] + struct.pack("<I", 2) + data[12:])
    with pytest.raises(CheckpointError, match="truncated|corrupt"):
        decode_checkpoint(data[:-100])
    flipped = bytearray(data)
    flipped[5000] ^= 1
    with pytest.raises(CheckpointError, match="CRC"):
        decode_checkpoint(bytes(flipped))
    # a checkpoint whose config names fewer layers than stored (drop the last record)
    cfg, records = decode_checkpoint(data)
    net = build_network(cfg)
    del net.blocks["G"]
    path = tmp_path / "missing.ckpt"
    path.write_bytes(encode_checkpoint(net))
    with pytest.raises(CheckpointError, match="missing layer G"):
        load_checkpoint(path)


def test_rejects_shape_mismatch(tmp_path):
    net = build_network(scaled_config(16))
    net.blocks["F"].params["b"] = np.zeros(2, np.float32)
    path = tmp_path / "bad.ckpt"
    save_checkpoint(net, path)
    with pytest.raises(CheckpointError, match="F.b"):
        load_checkpoint(path)
