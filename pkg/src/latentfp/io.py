"""Bit-exact grayscale image I/O: binary PGM (P5) and grayscale PNG, 8 or 16 bit.

Only the subset needed for reproducible fixtures is supported. Writers are
deterministic: the same image always produces the same bytes.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .image import check_image

__all__ = ["ImageFormatError", "load_image", "save_image", "encode_pgm", "encode_png", "quantize"]

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# mkstemp creates 0600 files; read the umask once so outputs get normal modes
_UMASK = os.umask(0)
os.umask(_UMASK)


class ImageFormatError(ValueError):
    """Unreadable file or unsupported format."""


def quantize(img: np.ndarray, depth: int) -> np.ndarray:
    """Scale [0,1] values to integers with round-half-away-from-zero."""
    if depth not in (8, 16):
        raise ValueError(f"depth must be 8 or 16, got {depth}")
    maxval = (1 << depth) - 1
    # all values are non-negative, so floor(v + 0.5) is half-away-from-zero
    q = np.floor(np.asarray(img, dtype=np.float64) * maxval + 0.5)
    return q.astype(np.uint16 if depth == 16 else np.uint8)


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ImageFormatError(f"unsupported format: PGM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ImageFormatError("zero-dimension image")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    raster = data[offset : offset + nbytes]
    if len(raster) != nbytes:
        raise ImageFormatError("truncated PGM raster")
    pix = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return pix.astype(np.float64) / maxval


def encode_pgm(img: np.ndarray, depth: int = 8) -> bytes:
    img = check_image(img)
    q = quantize(img, depth)
    h, w = img.shape
    header = f"P5\n{w} {h}\n{(1 << depth) - 1}\n".encode("ascii")
    body = q.astype(">u2").tobytes() if depth == 16 else q.tobytes()
    return header + body


# -- PNG ---------------------------------------------------------------------

def _paeth(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    p = a + b - c
    pa, pb, pc = np.abs(p - a), np.abs(p - b), np.abs(p - c)
    return np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))


def _unfilter(raw: bytes, height: int, stride: int, bpp: int) -> np.ndarray:
    if len(raw) < height * (stride + 1):
        raise ImageFormatError("truncated PNG image data")
    rows = np.frombuffer(raw[: height * (stride + 1)], dtype=np.uint8).reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.int32)
    prev = np.zeros(stride, dtype=np.int32)
    for r in range(height):
        ftype = rows[r, 0]
        line = rows[r, 1:].astype(np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):
            # these filters depend on already-reconstructed bytes of the same row
            cur = np.zeros(stride, dtype=np.int32)
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                if ftype == 1:
                    pred = left
                elif ftype == 3:
                    pred = (left + prev[i]) >> 1
                else:
                    upleft = prev[i - bpp] if i >= bpp else 0
                    pred = int(_paeth(np.int32(left), prev[i], np.int32(upleft)))
                cur[i] = (line[i] + pred) & 0xFF
        else:
            raise ImageFormatError(f"invalid PNG filter type {ftype}")
        out[r] = cur
        prev = cur
    return out.astype(np.uint8)


def decode_png(data: bytes) -> np.ndarray:
    if not data.startswith(PNG_SIGNATURE):
        raise ImageFormatError("not a PNG file")
    pos = len(PNG_SIGNATURE)
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        crc = data[pos + 8 + length : pos + 12 + length]
        if len(body) != length or len(crc) != 4:
            raise ImageFormatError("truncated PNG chunk")
        if struct.unpack(">I", crc)[0] != zlib.crc32(ctype + body) & 0xFFFFFFFF:
            raise ImageFormatError(f"CRC mismatch in PNG chunk {ctype!r}")
        pos += 12 + length
        if ctype == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat += body
        elif ctype == b"IEND":
            break
    if ihdr is None:
        raise ImageFormatError("PNG without IHDR")
    width, height, depth, color_type, _comp, _filt, interlace = ihdr
    if width == 0 or height == 0:
        raise ImageFormatError("zero-dimension image")
    if color_type != 0:
        raise ImageFormatError("unsupported format: only grayscale PNG (color type 0) is accepted")
    if depth not in (8, 16):
        raise ImageFormatError(f"unsupported format: PNG bit depth {depth}")
    if interlace != 0:
        raise ImageFormatError("unsupported format: interlaced PNG")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise ImageFormatError("corrupt PNG image data") from exc
    bpp = depth // 8
    pix = _unfilter(raw, height, width * bpp, bpp)
    if depth == 16:
        vals = pix.reshape(height, width, 2).astype(np.uint32)
        vals = (vals[..., 0] << 8) | vals[..., 1]
    else:
        vals = pix
    return vals.astype(np.float64) / ((1 << depth) - 1)


def _chunk(ctype: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)


def encode_png(img: np.ndarray, depth: int = 8) -> bytes:
    img = check_image(img)
    q = quantize(img, depth)
    h, w = img.shape
    rows = q.astype(">u2").view(np.uint8).reshape(h, 2 * w) if depth == 16 else q
    raw = np.concatenate([np.zeros((h, 1), dtype=np.uint8), rows], axis=1).tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, depth, 0, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 9))
        + _chunk(b"IEND", b"")
    )


# -- public entry points -----------------------------------------------------

def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a grayscale PGM (P5) or PNG file into a float64 image in [0, 1]."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data.startswith(PNG_SIGNATURE):
        return decode_png(data)
    if data[:1] == b"P":
        return decode_pgm(data)
    raise ImageFormatError(f"unsupported format: {path}")


def atomic_write(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(img: np.ndarray, path: str | os.PathLike, depth: int = 8) -> None:
    """Write ``img`` as PNG or PGM depending on the file suffix (default PNG)."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        payload = encode_pgm(img, depth)
    else:
        payload = encode_png(img, depth)
    atomic_write(path, payload)
