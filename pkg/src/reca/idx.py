"""Reader/writer for the big-endian IDX container used by the MNIST files."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(data: bytes, path=None) -> np.ndarray:
    """Parse an in-memory IDX payload (uint8 images or labels)."""
    if len(data) < 8:
        raise IdxFormatError("truncated header", len(data), path)
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IMAGES_MAGIC:
        if len(data) < 16:
            raise IdxFormatError("truncated image header", len(data), path)
        count, rows, cols = struct.unpack_from(">III", data, 4)
        shape, offset = (count, rows, cols), 16
    elif magic == LABELS_MAGIC:
        (count,) = struct.unpack_from(">I", data, 4)
        shape, offset = (count,), 8
    else:
        raise IdxFormatError(f"bad magic number 0x{magic:08x}", 0, path)
    expected = int(np.prod(shape))
    available = len(data) - offset
    if available < expected:
        raise IdxFormatError(
            f"truncated payload: header announces {expected} bytes, found {available}",
            offset + available, path,
        )
    if available > expected:
        raise IdxFormatError(
            f"count mismatch: {available - expected} trailing bytes", offset + expected, path
        )
    return np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(shape).copy()


def load_idx(path) -> np.ndarray:
    """Load images ``(n, rows, cols)`` or labels ``(n,)``; gzip is detected automatically."""
    return parse_idx(_read_bytes(path), path)


def write_idx(path, array) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise TypeError("IDX writer supports uint8 arrays only")
    if array.ndim == 3:
        header = struct.pack(">IIII", IMAGES_MAGIC, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", LABELS_MAGIC, array.shape[0])
    else:
        raise ValueError("expected a (n, rows, cols) image stack or (n,) labels")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(array).tobytes())
