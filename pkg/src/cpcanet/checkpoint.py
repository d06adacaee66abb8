"""CPCT tensor serialization and the CRC-guarded checkpoint container.

CPCT layout (all multi-byte fields little-endian): magic ``CPCT``, u32
version (=1), u8 dtype code (1=f32, 2=f64), u8 ndim, ndim x u64 extents,
then raw little-endian values in row-major order.

A checkpoint is: magic ``CPCK``, u32 version (=1), u32 entry count, then
per entry a u32 name length, UTF-8 name, and a CPCT blob; the file ends
with the CRC32 (polynomial 0xEDB88320) of all preceding bytes.  Loading
validates the CRC before any entry is parsed, so a truncated or corrupted
file never yields a partial result.  Writes are atomic (temp + rename).

Cross-precision loads convert: f64 payloads round to f32 targets, f32
payloads widen exactly to f64.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .module import Module

TENSOR_MAGIC = b"CPCT"
CHECKPOINT_MAGIC = b"CPCK"
VERSION = 1
_DTYPE_CODE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_CODE_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODE:
        raise CheckpointError(f"unsupported dtype {arr.dtype}; expected f32 or f64")
    head = TENSOR_MAGIC + struct.pack("<IBB", VERSION, _DTYPE_CODE[arr.dtype], arr.ndim)
    extents = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return head + extents + le.tobytes()


def parse_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one CPCT blob; returns (array, offset past the blob)."""
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise CheckpointError(f"bad tensor magic at byte {offset}")
    offset += 4
    version, code, ndim = struct.unpack_from("<IBB", buf, offset)
    offset += 6
    if version != VERSION:
        raise CheckpointError(f"unsupported tensor format version {version}")
    if code not in _CODE_DTYPE:
        raise CheckpointError(f"unknown dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}Q", buf, offset) if ndim else ()
    offset += 8 * ndim
    dtype = _CODE_DTYPE[code]
    count = 1
    for s in shape:
        count *= s
    nbytes = count * dtype.itemsize
    if len(buf) < offset + nbytes:
        raise CheckpointError("tensor payload truncated")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.astype(dtype.newbyteorder("=")), offset + nbytes


def save_tensor_file(path, arr: np.ndarray) -> None:
    _atomic_write(path, tensor_bytes(arr))


def load_tensor_file(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = parse_tensor(buf)
    if end != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - end} trailing bytes")
    return arr


def _atomic_write(path, payload: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def _model_state(model) -> list[tuple[str, np.ndarray]]:
    if isinstance(model, Module):
        return [(name, t.data) for name, t in model.named_state()]
    if isinstance(model, dict):
        return list(model.items())
    return list(model)


def checkpoint_bytes(state) -> bytes:
    """Serialize an ordered (name, array) mapping or pair list."""
    items = _model_state(state) if not isinstance(state, list) else state
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate state names")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", VERSION, len(items))]
    for name, arr in items:
        if not isinstance(name, str):
            raise CheckpointError(f"state names must be strings, got {name!r}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(tensor_bytes(np.asarray(arr)))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(model, path) -> None:
    """Serialize model parameters and buffers (or a name->array mapping)."""
    _atomic_write(path, checkpoint_bytes(model))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read and CRC-validate a checkpoint; returns name -> array."""
    buf = Path(path).read_bytes()
    if len(buf) < 16:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    body, stored = buf[:-4], struct.unpack("<I", buf[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise CheckpointError(f"{path}: CRC mismatch; file is corrupt or truncated")
    if body[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic {body[:4]!r}")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", body, offset)
        offset += 4
        name = body[offset:offset + nlen].decode("utf-8")
        offset += nlen
        arr, offset = parse_tensor(body, offset)
        if name in state:
            raise CheckpointError(f"{path}: duplicate entry {name!r}")
        state[name] = arr
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes")
    return state


def load_state_into(model: Module, state_or_path) -> None:
    """Copy a checkpoint into a model, converting precision if needed.

    Raises CheckpointError listing every missing, unexpected, or
    shape-mismatched entry.
    """
    state = (load_checkpoint(state_or_path)
             if isinstance(state_or_path, (str, os.PathLike))
             else dict(state_or_path))
    targets = dict(model.named_state())
    problems = []
    for name in sorted(set(targets) - set(state)):
        problems.append(f"missing from checkpoint: {name}")
    for name in sorted(set(state) - set(targets)):
        problems.append(f"unexpected in checkpoint: {name}")
    for name in sorted(set(state) & set(targets)):
        if state[name].shape != targets[name].shape:
            problems.append(
                f"shape mismatch for {name}: checkpoint {state[name].shape}, "
                f"model {targets[name].shape}"
            )
    if problems:
        raise CheckpointError("checkpoint does not match model:\n  " + "\n  ".join(problems))
    for name, target in targets.items():
        target.data[...] = state[name].astype(target.data.dtype, copy=False)
