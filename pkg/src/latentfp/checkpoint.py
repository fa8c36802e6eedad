"""Versioned binary checkpoints.

Byte layout (all integers little-endian)::

    magic        8 bytes   b"LFPCKPT\\0"
    version      u32       FORMAT_VERSION
    config_len   u32
    config       config_len bytes of UTF-8 JSON (NetworkConfig.to_dict())
    n_records    u32
    record * n_records:
        id_len   u16, id (UTF-8)
        n_tensors u32
        tensor * n_tensors:
            name_len u16, name (UTF-8)
            ndim     u8
            dims     u32 * ndim
            data     float32 * prod(dims), little-endian, C order
    crc32        u32 over every preceding byte
"""
from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .io import atomic_write
from .network import Network, NetworkConfig, build_network

__all__ = ["CheckpointError", "FORMAT_VERSION", "MAGIC", "encode_checkpoint", "decode_checkpoint",
           "save_checkpoint", "load_checkpoint"]

MAGIC = b"LFPCKPT\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated or incompatible checkpoint."""


def encode_checkpoint(net: Network) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg = json.dumps(net.cfg.to_dict(), sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg]
    records = [(s.id, net.blocks[s.id].params) for s in net.specs if s.id in net.blocks]
    parts.append(struct.pack("<I", len(records)))
    for layer_id, params in records:
        lid = layer_id.encode("utf-8")
        parts += [struct.pack("<H", len(lid)), lid, struct.pack("<I", len(params))]
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            bname = name.encode("utf-8")
            parts += [struct.pack("<H", len(bname)), bname, struct.pack("<B", arr.ndim)]
            parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> tuple[NetworkConfig, dict]:
    if len(data) < len(MAGIC) + 8 or not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    (crc,) = struct.unpack("<I", data[-4:])
    r = _Reader(data[:-4])
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {FORMAT_VERSION})")
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint is truncated or corrupt (CRC mismatch)")
    (cfg_len,) = r.unpack("<I")
    try:
        cfg = NetworkConfig.from_dict(json.loads(r.take(cfg_len).decode("utf-8")))
    except (ValueError, TypeError, KeyError) as exc:
        raise CheckpointError(f"invalid checkpoint config: {exc}") from exc
    (n_records,) = r.unpack("<I")
    records = {}
    for _ in range(n_records):
        (id_len,) = r.unpack("<H")
        layer_id = r.take(id_len).decode("utf-8")
        (n_tensors,) = r.unpack("<I")
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = r.unpack("<H")
            name = r.take(name_len).decode("utf-8")
            (ndim,) = r.unpack("<B")
            dims = r.unpack(f"<{ndim}I")
            count = int(np.prod(dims, dtype=np.int64))
            tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
        records[layer_id] = tensors
    if r.pos != len(r.data):
        raise CheckpointError("trailing bytes after the last record")
    return cfg, records


def save_checkpoint(net: Network, path: str | os.PathLike) -> None:
    atomic_write(path, encode_checkpoint(net))


def load_checkpoint(path: str | os.PathLike) -> Network:
    """Rebuild a network from ``path``. Nothing is returned unless every record is valid."""
    with open(path, "rb") as fh:
        data = fh.read()
    cfg, records = decode_checkpoint(data)
    net = build_network(cfg)
    for layer_id, block in net.blocks.items():
        if layer_id not in records:
            raise CheckpointError(f"checkpoint is missing layer {layer_id}")
        stored = records[layer_id]
        if set(stored) != set(block.params):
            raise CheckpointError(f"layer {layer_id}: tensor names differ from the configured layer")
        for name, arr in block.params.items():
            if stored[name].shape != arr.shape:
                raise CheckpointError(f"layer {layer_id}.{name}: shape {stored[name].shape} != {arr.shape}")
    extra = set(records) - set(net.blocks)
    if extra:
        raise CheckpointError(f"checkpoint has unknown layers: {sorted(extra)}")
    for layer_id, block in net.blocks.items():
        for name in block.params:
            block.params[name] = records[layer_id][name].copy()
    return net
