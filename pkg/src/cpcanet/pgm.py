"""Binary PGM (P5) reading and writing.

Supports maxval 255 (one byte per sample) and maxval 65535 (two bytes,
big-endian sample order per the PGM specification).  Parse errors report
the byte offset of the offending token.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import PgmError


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PgmError(f"unexpected end of header at byte {pos}")
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (uint array of shape (H, W), maxval)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P5":
        raise PgmError(f"{path}: not a binary PGM (magic {data[:2]!r} at byte 0)")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PgmError(
                f"{path}: non-numeric header token {tok!r} at byte {pos - len(tok)}"
            ) from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError(f"{path}: invalid dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise PgmError(f"{path}: unsupported maxval {maxval} at byte {pos}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmError(f"{path}: missing whitespace after maxval at byte {pos}")
    pos += 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = width * height
    expected = count * dtype.itemsize
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise PgmError(
            f"{path}: raster truncated at byte {pos + len(raster)}; "
            f"expected {expected} bytes"
        )
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return arr.astype(np.int64 if maxval == 65535 else np.uint8), maxval


def write_pgm(path, samples: np.ndarray, maxval: int) -> None:
    """Write a binary PGM atomically (temp file + rename)."""
    if maxval not in (255, 65535):
        raise PgmError(f"unsupported maxval {maxval}")
    h, w = samples.shape
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    if samples.min() < 0 or samples.max() > maxval:
        raise PgmError(f"sample values out of range [0, {maxval}]")
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = header + samples.astype(dtype).tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def read_image_pgm(path) -> np.ndarray:
    """Grayscale image scaled to [0, 1], shape (1, H, W), float64."""
    arr, maxval = read_pgm(path)
    return (arr.astype(np.float64) / maxval)[None]


def write_image_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    """Quantize a [0, 1] image (2D or (1, H, W)) to gray levels and write."""
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise PgmError(f"PGM images are single-channel, got shape {img.shape}")
        img = img[0]
    if img.min() < 0 or img.max() > 1:
        raise PgmError("image values must lie in [0, 1]")
    write_pgm(path, np.round(img * maxval).astype(np.int64), maxval)


def read_mask_pgm(path) -> np.ndarray:
    """Label mask with gray levels as class ids, shape (H, W), int64."""
    arr, _ = read_pgm(path)
    return arr.astype(np.int64)


def write_mask_pgm(mask: np.ndarray, path) -> None:
    """Write label values as raw gray levels (maxval 255)."""
    mask = np.asarray(mask)
    if mask.max() > 255:
        raise PgmError(f"mask labels exceed 255: {mask.max()}")
    write_pgm(path, mask.astype(np.int64), 255)
