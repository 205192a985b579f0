"""Binary matrix files.

Layout (all little-endian)::

    offset  size  field
    0       4     magic  b"DSMX"
    4       4     version (u32, currently 1)
    8       1     dtype (u8: 0 = binary64, 1 = binary32)
    9       8     rows (u64)
    17      8     cols (u64)
    25      ...   row-major payload, rows * cols * width bytes

Arithmetic is always binary64; binary32 exists for at-rest checkpoints only.
"""
import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError, CorruptError
from .linalg import as_dense

MAGIC = b"DSMX"
VERSION = 1
HEADER = struct.Struct("<4sIBQQ")
HEADER_SIZE = HEADER.size  # 25

FLOAT64 = 0
FLOAT32 = 1
_DTYPES = {FLOAT64: np.dtype("<f8"), FLOAT32: np.dtype("<f4")}
_NAMES = {"binary64": FLOAT64, "float64": FLOAT64, "f8": FLOAT64,
          "binary32": FLOAT32, "float32": FLOAT32, "f4": FLOAT32}


def dtype_code(dtype):
    if isinstance(dtype, (int, np.integer)) and int(dtype) in _DTYPES:
        return int(dtype)
    try:
        return _NAMES[str(dtype).lower()]
    except KeyError:
        raise ContractError(f"unsupported matrix dtype {dtype!r}") from None


def encode_matrix(matrix, dtype="binary64"):
    """Serialise ``matrix`` to bytes in the DSMX format."""
    code = dtype_code(dtype)
    arr = as_dense(matrix)
    rows, cols = arr.shape
    if code == FLOAT32 and arr.size and np.max(np.abs(arr)) > np.finfo(np.float32).max:
        raise ContractError("value out of binary32 range")
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    return HEADER.pack(MAGIC, VERSION, code, rows, cols) + payload


def decode_matrix(buf, path=None):
    """Parse DSMX bytes into a float64 array."""
    buf = memoryview(buf)
    if len(buf) < HEADER_SIZE:
        raise CorruptError(f"truncated header: {len(buf)} of {HEADER_SIZE} bytes",
                           offset=len(buf), path=path)
    magic, version, code, rows, cols = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorruptError(f"bad magic {bytes(magic)!r}", offset=0, path=path)
    if version != VERSION:
        raise CorruptError(f"unsupported version {version}", offset=4, path=path)
    if code not in _DTYPES:
        raise CorruptError(f"unknown dtype code {code}", offset=8, path=path)
    width = _DTYPES[code].itemsize
    expected = rows * cols * width
    have = len(buf) - HEADER_SIZE
    if have < expected:
        raise CorruptError(f"truncated payload: {have} of {expected} bytes",
                           offset=len(buf), path=path)
    if have > expected:
        raise CorruptError(f"{have - expected} trailing bytes after payload",
                           offset=HEADER_SIZE + expected, path=path)
    arr = np.frombuffer(buf, dtype=_DTYPES[code], count=rows * cols, offset=HEADER_SIZE)
    return arr.astype(np.float64).reshape(rows, cols)


def write_matrix(path, matrix, dtype="binary64"):
    """Write ``matrix`` to ``path``; returns the SHA-256 hex digest of the file."""
    data = encode_matrix(matrix, dtype)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def read_matrix(path, sha256=None):
    """Read a DSMX file as float64, optionally verifying its SHA-256."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CorruptError("missing matrix file", path=path) from None
    if sha256 is not None and hashlib.sha256(data).hexdigest() != sha256:
        raise CorruptError("checksum mismatch", path=path)
    return decode_matrix(data, path=path)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
