"""NTF tensor files: ``b"NTF1"``, u32 rank, rank u32 dims, row-major f32 payload (all little-endian)."""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"NTF1"


def encode(tensor) -> bytes:
    arr = np.asarray(tensor, dtype="<f4", order="C")  # keeps rank 0
    head = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + arr.tobytes(order="C")


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not an NTF1 tensor (bad magic or too short)")
    (rank,) = struct.unpack_from("<I", buf, 4)
    off = 8 + 4 * rank
    if len(buf) < off:
        raise FormatError(f"truncated header: rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    n = int(np.prod(dims, dtype=np.int64))
    if len(buf) != off + 4 * n:
        raise FormatError(f"payload is {len(buf) - off} bytes, expected {4 * n} for shape {dims}")
    return np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims).astype(np.float32)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def ntf_write(tensor, path) -> None:
    atomic_write_bytes(path, encode(tensor))


def ntf_read(path) -> np.ndarray:
    try:
        return decode(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
