"""Little-endian binary primitives shared by the on-disk formats."""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

F32 = np.dtype("<f4")
F64 = np.dtype("<f8")


def read_exact(f: BinaryIO, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated {what}: expected {n} bytes, got {len(data)}")
    return data


def check_magic(f: BinaryIO, magic: bytes, path) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")


def expect_eof(f: BinaryIO, path) -> None:
    if f.read(1):
        raise FormatError(f"{path}: trailing bytes after payload")


def read_u8(f: BinaryIO, path, what: str = "u8") -> int:
    return struct.unpack("<B", read_exact(f, 1, path, what))[0]


def read_u32(f: BinaryIO, path, what: str = "u32") -> int:
    return struct.unpack("<I", read_exact(f, 4, path, what))[0]


def read_u64(f: BinaryIO, path, what: str = "u64") -> int:
    return struct.unpack("<Q", read_exact(f, 8, path, what))[0]


def write_u8(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<B", value))


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def write_u64(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<Q", value))


def read_array(f: BinaryIO, count: int, dtype: np.dtype, path, what: str) -> np.ndarray:
    raw = read_exact(f, count * dtype.itemsize, path, what)
    # copy() detaches the array from the read buffer and makes it writable
    return np.frombuffer(raw, dtype=dtype).copy()


def write_array(f: BinaryIO, values: np.ndarray, dtype: np.dtype) -> None:
    f.write(np.ascontiguousarray(values, dtype=dtype).tobytes())
