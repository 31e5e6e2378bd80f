"""On-disk formats: RGT1 tensors, binary PGM/PPM images, key=value text."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

RGT1_MAGIC = b"RGT1"
DTYPE_F64 = 0x01


class FormatError(ValueError):
    """Malformed, truncated, or mismatched file contents."""


def encode_tensor(t) -> bytes:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim > 255:
        raise FormatError("rank exceeds 255")
    head = RGT1_MAGIC + bytes([DTYPE_F64, t.ndim])
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + dims + t.astype("<f8").tobytes(order="C")


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor starting at ``offset``; returns (tensor, next offset)."""
    if len(buf) < offset + 6:
        raise FormatError("truncated RGT1 header")
    if buf[offset:offset + 4] != RGT1_MAGIC:
        raise FormatError(f"bad magic {buf[offset:offset + 4]!r}, expected {RGT1_MAGIC!r}")
    dtype, rank = buf[offset + 4], buf[offset + 5]
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype code 0x{dtype:02x}")
    pos = offset + 6
    if len(buf) < pos + 8 * rank:
        raise FormatError("truncated RGT1 dims")
    shape = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    end = pos + 8 * count
    if len(buf) < end:
        raise FormatError(f"truncated RGT1 payload: need {8 * count} bytes, have {len(buf) - pos}")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64)
    return values.reshape(shape), end


def save_tensor(t, path) -> None:
    Path(path).write_bytes(encode_tensor(t))


def load_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    t, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes")
    return t


# PNM ------------------------------------------------------------------------

def to_bytes(image) -> np.ndarray:
    """Map [-1, 1] pixels to uint8 via round((v+1)/2*255), clamped."""
    v = np.rint((np.asarray(image, dtype=np.float64) + 1.0) / 2.0 * 255.0)
    return np.clip(v, 0, 255).astype(np.uint8)


def from_bytes(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0 * 2.0 - 1.0


def write_pnm(path, image, *, raw: bool = False) -> None:
    """Write a P5 (2-D) or P6 (H x W x 3) file.

    With ``raw`` the array is taken as 0..255 values as-is; otherwise it is
    mapped from the [-1, 1] pixel convention.
    """
    data = np.clip(np.rint(image), 0, 255).astype(np.uint8) if raw else to_bytes(image)
    if data.ndim == 2:
        magic = b"P5"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"cannot write PNM for shape {data.shape}")
    h, w = data.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + data.tobytes())


def read_pnm(path, *, raw: bool = False) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM (magic {magic!r})")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        try:
            fields.append(int(buf[start:pos]))
        except ValueError:
            raise FormatError(f"{path}: bad header token {buf[start:pos]!r}") from None
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported (need 255)")
    pos += 1  # single whitespace before raster
    channels = 1 if magic == b"P5" else 3
    n = w * h * channels
    if len(buf) < pos + n:
        raise FormatError(f"{path}: truncated raster")
    data = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos)
    data = data.reshape((h, w) if channels == 1 else (h, w, 3))
    return data.astype(np.float64) if raw else from_bytes(data)


# key=value ------------------------------------------------------------------

def format_float(x: float) -> str:
    return f"{float(x):.9g}"


def write_kv(path, items: dict) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, float):
            v = format_float(v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(), str(path))


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
