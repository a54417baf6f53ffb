"""Bit-exact binary checkpoints for named tensor sets.

Layout (little-endian):
  magic "BCMC" | version u32 | config_len u64 | config JSON (UTF-8)
  | tensor_count u64 | per tensor: name_len u64, name UTF-8,
    rank u64, dims u64 each, row-major float64 payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BCMC"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""


def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays plus a JSON config blob."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.astype("<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint, returning (config, name -> array)."""
    if not Path(path).exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(
                f"checkpoint version {version} unsupported (expected {VERSION})")
        (config_len,) = struct.unpack("<Q", _read_exact(fh, 8, "config length"))
        config = json.loads(_read_exact(fh, config_len, "config blob"))
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<Q", _read_exact(fh, 8, "name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<Q", _read_exact(fh, 8, "rank"))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8, "dim"))[0]
                          for _ in range(rank))
            n = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, n * 8, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"trailing bytes after tensor table in {path}")
    return config, tensors


def restore_into(params: dict, tensors: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into an existing name -> Tensor parameter map.

    Every name must match and every shape must agree.
    """
    unknown = set(tensors) - set(params)
    if unknown:
        raise CheckpointError(f"unknown tensor name(s) in checkpoint: {sorted(unknown)}")
    missing = set(params) - set(tensors)
    if missing:
        raise CheckpointError(f"checkpoint missing tensor(s): {sorted(missing)}")
    for name, arr in tensors.items():
        target = params[name]
        if target.data.shape != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: model {target.data.shape}, "
                f"checkpoint {arr.shape}")
        target.data[...] = arr
