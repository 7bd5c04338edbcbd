"""Binary container for named float64 tensors.

Layout (all integers little-endian):
    magic "NIOT" | version u32 | entry count u32
    per entry: name length u16 | UTF-8 name | rank u8 | extents u64 x rank | float64 payload, row-major
    CRC32 u32 over everything preceding it
"""

from __future__ import annotations

import math
import struct
import sys
import zlib
from collections.abc import Mapping
from pathlib import Path
from typing import Literal

import numpy as np

from .constants import TENSOR_FILE_MAGIC, TENSOR_FILE_VERSION
from .errors import (
    ChecksumMismatchError,
    MagicMismatchError,
    NonFiniteTensorError,
    TruncatedFileError,
    UsageError,
    VersionMismatchError,
)
from .output_writer import atomic_write_bytes
from .tensor import Tensor


_HEADER = struct.Struct("<4sII")
_CRC = struct.Struct("<I")
_MAX_RANK = 64
# 256 TiB; larger declared payloads can only come from corrupted extents
_MAX_PAYLOAD_BYTES = 1 << 48


def _as_array(value: Tensor | np.ndarray) -> np.ndarray:
    data = value.data if isinstance(value, Tensor) else value
    return np.ascontiguousarray(data, dtype="<f8")


def encode_tensors(tensors: Mapping[str, Tensor | np.ndarray]) -> bytes:
    """Serialize a name -> tensor map into container bytes."""
    parts = [_HEADER.pack(TENSOR_FILE_MAGIC, TENSOR_FILE_VERSION, len(tensors))]
    for name, value in tensors.items():
        array = _as_array(value)
        if not np.all(np.isfinite(array)):
            raise NonFiniteTensorError(f"tensor {name!r} contains NaN or Inf")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or array.ndim > _MAX_RANK:
            raise UsageError(f"tensor {name!r} exceeds container limits")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{array.ndim}Q", array.ndim, *array.shape))
        parts.append(array.tobytes(order="C"))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.end = end
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > self.end:
            raise TruncatedFileError(f"file ends at byte {self.end}, needed {self.offset + n}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def skip(self, n: int) -> int:
        if self.offset + n > self.end:
            raise TruncatedFileError(f"file ends at byte {self.end}, needed {self.offset + n}")
        start = self.offset
        self.offset += n
        return start

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_layout(reader: _Reader, count: int) -> list[tuple[bytes, tuple[int, ...], int, int]]:
    """Walk the entry headers without touching payloads.

    Returns (raw name, shape, payload offset, payload bytes) per entry. Ranks and
    extents no writer can produce are reported as corruption, not truncation.
    """
    layout = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len)
        (rank,) = reader.unpack("<B")
        if rank > _MAX_RANK:
            raise ChecksumMismatchError(f"entry declares rank {rank}, above the supported {_MAX_RANK}")
        shape = reader.unpack(f"<{rank}Q")
        n_bytes = 8 * math.prod(shape)
        if max(shape, default=0) > sys.maxsize or n_bytes > _MAX_PAYLOAD_BYTES:
            raise ChecksumMismatchError(f"entry declares extents {shape} that no array can hold")
        layout.append((name, shape, reader.skip(n_bytes), n_bytes))
    return layout


def decode_tensors(data: bytes) -> dict[str, np.ndarray]:
    """Parse container bytes; raises a distinct TensorFileError subclass per failure mode.

    Entry headers are walked and bounds-checked first, the CRC is verified next,
    and only then are payloads materialized.
    """
    if len(data) < 4 or data[:4] != TENSOR_FILE_MAGIC:
        if len(data) >= 4 or not TENSOR_FILE_MAGIC.startswith(data):
            raise MagicMismatchError(f"bad magic bytes {data[:4]!r}")
        raise TruncatedFileError("file too short for header")
    if len(data) < _HEADER.size + _CRC.size:
        raise TruncatedFileError("file too short for header and checksum")

    _, version, count = _HEADER.unpack_from(data)
    if version != TENSOR_FILE_VERSION:
        raise VersionMismatchError(f"unsupported container version {version}")

    body_end = len(data) - _CRC.size
    reader = _Reader(data, body_end)
    reader.offset = _HEADER.size
    layout = _read_layout(reader, count)

    (stored_crc,) = _CRC.unpack_from(data, body_end)
    if reader.offset != body_end or zlib.crc32(data[:body_end]) != stored_crc:
        raise ChecksumMismatchError("CRC32 mismatch")

    tensors: dict[str, np.ndarray] = {}
    for raw_name, shape, offset, n_bytes in layout:
        try:
            name = raw_name.decode("utf-8")
            payload = np.frombuffer(data, dtype="<f8", count=n_bytes // 8, offset=offset)
            tensors[name] = payload.reshape(shape).astype(np.float64)
        except (UnicodeDecodeError, ValueError) as e:
            raise ChecksumMismatchError(f"entry {raw_name!r} does not decode: {e}") from e
    return tensors


def save_tensors(path: Path | str, tensors: Mapping[str, Tensor | np.ndarray]) -> Path:
    return atomic_write_bytes(Path(path), encode_tensors(tensors))


def load_tensors(path: Path | str) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())


def tensor_io(
    path: Path | str,
    mode: Literal["save", "load"],
    tensors: Mapping[str, Tensor | np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Save or load a named tensor map.

    Args:
        path: Container file
        mode: "save" or "load"
        tensors: Map to save (save mode only)

    Returns:
        The map that is now on disk
    """
    if mode == "save":
        if tensors is None:
            raise UsageError("save mode requires tensors")
        save_tensors(path, tensors)
        return {name: _as_array(value).astype(np.float64) for name, value in tensors.items()}
    if mode == "load":
        return load_tensors(path)
    raise UsageError(f"unknown tensor_io mode: {mode}")
