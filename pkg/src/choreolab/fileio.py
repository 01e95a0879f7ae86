"""Binary array files and atomic writes shared by the corpus and CLI."""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MUSIC_MAGIC = b"DMFT"
MOTION_MAGIC = b"DMMO"
FORMAT_VERSION = 1

# magic(4s) version(u32) rows(u32) cols(u32) fps(u32), little-endian
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    """File does not conform to the expected binary layout."""


def write_array_file(path: str | Path, magic: bytes, array: np.ndarray, fps: int) -> None:
    """Write a 2-D float32 array with header, atomically (temp + rename)."""
    data = np.ascontiguousarray(array, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {data.shape}")
    header = _HEADER.pack(magic, FORMAT_VERSION, data.shape[0], data.shape[1], fps)
    atomic_write_bytes(path, header + data.tobytes())


def read_array_file(path: str | Path, magic: bytes) -> tuple[np.ndarray, int]:
    """Read a 2-D float32 array written by write_array_file; returns (array, fps)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    got_magic, version, rows, cols, fps = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + rows * cols * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {rows * cols * 4}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)
    return data.copy(), fps


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write bytes via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
