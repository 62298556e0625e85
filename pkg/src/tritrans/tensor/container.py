"""Raw tensor container files.

Single tensor record (all integers little-endian)::

    b"TTNR"  magic
    u8       version (1)
    u32      rank
    u64*rank extents
    f32*     row-major values

A checkpoint bundles named records::

    b"TTNC"  magic
    u8       version (1)
    u32      length of UTF-8 JSON metadata, then the metadata
    u32      section count
    per section: u32 name length, UTF-8 name, tensor record
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

TENSOR_MAGIC = b"TTNR"
BUNDLE_MAGIC = b"TTNC"
VERSION = 1


class ContainerError(ValueError):
    pass


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    pos = fh.tell()
    buf = fh.read(n)
    if len(buf) != n:
        raise ContainerError(f"truncated {what} at byte {pos}: wanted {n}, got {len(buf)}")
    return buf


def write_tensor(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype="<f4")  # ascontiguousarray would promote 0-d to 1-d
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<BI", VERSION, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> np.ndarray:
    pos = fh.tell()
    magic = _read_exact(fh, 4, "magic")
    if magic != TENSOR_MAGIC:
        raise ContainerError(f"bad tensor magic {magic!r} at byte {pos}")
    version, rank = struct.unpack("<BI", _read_exact(fh, 5, "header"))
    if version != VERSION:
        raise ContainerError(f"unsupported tensor version {version}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "extents"))
    count = int(np.prod(shape, dtype=np.uint64)) if rank else 1
    data = _read_exact(fh, 4 * count, "payload")
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_bundle(path, sections: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write atomically: a failed write never clobbers an existing file."""
    buf = io.BytesIO()
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    buf.write(BUNDLE_MAGIC)
    buf.write(struct.pack("<BI", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(sections)))
    for name, arr in sections.items():
        enc = name.encode()
        buf.write(struct.pack("<I", len(enc)))
        buf.write(enc)
        write_tensor(buf, arr)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def load_bundle(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != BUNDLE_MAGIC:
            raise ContainerError(f"{path}: not a checkpoint (magic {magic!r})")
        version, n_meta = struct.unpack("<BI", _read_exact(fh, 5, "header"))
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported version {version}")
        meta = json.loads(_read_exact(fh, n_meta, "metadata"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "section count"))
        sections = {}
        for _ in range(count):
            (n,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, n, "name").decode()
            sections[name] = read_tensor(fh)
    return sections, meta
