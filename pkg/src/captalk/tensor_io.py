"""Binary tensor files (".ctten") and checkpoint bundles.

A .ctten record is: magic b"CTT1", u32 little-endian rank, rank u32
little-endian extents, then float32 little-endian payload in row-major
order. A checkpoint is a pair of files sharing a prefix: "<prefix>.json"
(manifest with config and the tensor name order) and "<prefix>.ctten"
(the records concatenated in manifest order).
"""

from __future__ import annotations

import json
import os
from typing import BinaryIO

import numpy as np

from .errors import FormatError

MAGIC = b"CTT1"
_MAX_RANK = 16


def write_ctten_stream(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    fh.write(MAGIC)
    fh.write(np.asarray([arr.ndim], dtype="<u4").tobytes())
    fh.write(np.asarray(arr.shape, dtype="<u4").tobytes())
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_ctten_stream(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    raw = fh.read(4)
    if len(raw) != 4:
        raise FormatError("truncated tensor header")
    rank = int(np.frombuffer(raw, dtype="<u4")[0])
    if rank > _MAX_RANK:
        raise FormatError(f"implausible tensor rank {rank}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise FormatError("truncated tensor extents")
    shape = tuple(int(x) for x in np.frombuffer(raw, dtype="<u4"))
    if any(x == 0 for x in shape):
        raise FormatError(f"zero extent in tensor shape {shape}")
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise FormatError("truncated tensor payload")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def write_ctten(path: str, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_ctten_stream(fh, arr)


def read_ctten(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_ctten_stream(fh)
        if fh.read(1):
            raise FormatError(f"trailing bytes after tensor in {path}")
    return arr


def save_checkpoint(prefix: str, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write <prefix>.json + <prefix>.ctten. Tensor order is sorted by name
    so identical state always produces identical bytes."""
    names = sorted(tensors)
    manifest = dict(manifest)
    manifest["tensors"] = names
    directory = os.path.dirname(os.path.abspath(prefix))
    os.makedirs(directory, exist_ok=True)
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(prefix + ".ctten", "wb") as fh:
        for name in names:
            write_ctten_stream(fh, tensors[name])


def load_checkpoint(prefix: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(prefix + ".json", "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad checkpoint manifest {prefix}.json: {exc}") from exc
    names = manifest.get("tensors")
    if not isinstance(names, list):
        raise FormatError(f"checkpoint manifest {prefix}.json lacks a tensor list")
    tensors: dict[str, np.ndarray] = {}
    with open(prefix + ".ctten", "rb") as fh:
        for name in names:
            tensors[name] = read_ctten_stream(fh)
        if fh.read(1):
            raise FormatError(f"trailing bytes in {prefix}.ctten")
    return manifest, tensors
