"""Binary (P5) portable graymap I/O.

Intensities in [0, 1] quantize with round-half-up to maxval 255 (or 65535
behind the 16-bit flag); reading inverts the mapping, so a write-read-write
round trip is byte-identical after the first quantization.
"""
from __future__ import annotations

import numpy as np

from .errors import PgmError


def encode_pgm(values: np.ndarray, maxval: int = 255) -> bytes:
    if maxval not in (255, 65535):
        raise PgmError("maxval must be 255 or 65535")
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise PgmError("PGM payload must be a 2-D array")
    q = np.clip(np.floor(v * maxval + 0.5), 0, maxval)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n{maxval}\n".encode("ascii")
    if maxval == 255:
        return header + q.astype(np.uint8).tobytes()
    return header + q.astype(">u2").tobytes()


def write_pgm(path, values: np.ndarray, maxval: int = 255) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(values, maxval))


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Returns (values in [0, 1], maxval). Accepts standard P5 headers with
    comments and arbitrary whitespace."""
    if not data.startswith(b"P5"):
        raise PgmError("not a binary PGM (missing P5 magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise PgmError("malformed PGM header")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval not in (255, 65535) or width < 1 or height < 1:
        raise PgmError("unsupported PGM geometry or maxval")
    dtype = np.dtype(np.uint8) if maxval == 255 else np.dtype(">u2")
    count = width * height
    payload = data[pos:]
    if len(payload) < count * dtype.itemsize:
        raise PgmError("truncated PGM payload")
    raw = np.frombuffer(payload, dtype=dtype, count=count)
    return raw.reshape(height, width).astype(float) / maxval, maxval


def read_pgm(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def read_mask(path) -> np.ndarray:
    """Read a PGM written as a binary mask back into uint8 {0, 1}."""
    values, _ = read_pgm(path)
    return (values > 0.5).astype(np.uint8)
