"""
CQTENSOR: a minimal little-endian container for named float64 matrices.

Layout::

    b"CQTENSOR"            magic, 8 bytes
    u16 version            == 1
    u32 count
    count x {
        u16 name_len, name (UTF-8),
        u32 rows, u32 cols,
        rows * cols f64, row-major
    }

Trailing bytes are an error. A file is parsed in full before anything is
returned, so a corrupt file never yields a partial result.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"CQTENSOR"
VERSION = 1
_HEADER = struct.Struct("<8sHI")
_NAME_LEN = struct.Struct("<H")
_SHAPE = struct.Struct("<II")


class ContainerError(Exception):
    pass


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class DuplicateNameError(ContainerError):
    pass


class TrailingBytesError(ContainerError):
    pass


def encode(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long ({len(raw)} bytes)")
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tensor {name!r} must be 2-D, got shape {arr.shape}")
        rows, cols = arr.shape
        parts += [_NAME_LEN.pack(len(raw)), raw, _SHAPE.pack(rows, cols)]
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not a CQTENSOR file (bad magic)")
    if len(data) < _HEADER.size:
        raise TruncatedError("file ends inside the header")
    _, version, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported container version {version} (expected {VERSION})")

    pos = _HEADER.size
    out: dict[str, np.ndarray] = {}

    def need(n: int, what: str) -> None:
        if pos + n > len(data):
            raise TruncatedError(f"file ends inside {what} of entry {len(out)}")

    for _ in range(count):
        need(_NAME_LEN.size, "name length")
        (name_len,) = _NAME_LEN.unpack_from(data, pos)
        pos += _NAME_LEN.size
        need(name_len, "name")
        try:
            name = data[pos : pos + name_len].decode("utf-8")
        except UnicodeDecodeError as err:
            raise ContainerError(f"entry {len(out)} name is not valid UTF-8") from err
        pos += name_len
        if name in out:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        need(_SHAPE.size, "shape")
        rows, cols = _SHAPE.unpack_from(data, pos)
        pos += _SHAPE.size
        nbytes = rows * cols * 8
        need(nbytes, "payload")
        arr = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos)
        out[name] = arr.astype(np.float64).reshape(rows, cols)
        pos += nbytes
    if pos != len(data):
        raise TrailingBytesError(f"{len(data) - pos} trailing bytes after {count} entries")
    return out


def write_container(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def read_container(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())
