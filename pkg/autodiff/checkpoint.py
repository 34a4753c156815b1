"""
Binary tensor archive.

Layout (all integers little-endian):

    magic "ASRT" | u16 version | u32 tensor count | u32 metadata length
    metadata (UTF-8 JSON object)
    per tensor: u16 name length | name | u8 dtype code | u8 rank | u64 dims...
    raw little-endian values of every tensor, in header order
"""

import json
import struct
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

MAGIC = b"ASRT"
VERSION = 1

_DTYPE_CODES: dict[str, int] = {"float32": 1, "float64": 2, "int32": 3, "int64": 4}
_CODE_DTYPES = {code: np.dtype(name) for name, code in _DTYPE_CODES.items()}


def save_tensors(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """
    Write named arrays (and an optional JSON metadata header) to `path`.

    Raises:
        ValueError: On unsupported dtypes or over-long names
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(dict(metadata or {}), sort_keys=True).encode("utf-8")

    header = bytearray(MAGIC)
    header += struct.pack("<HII", VERSION, len(tensors), len(meta))
    header += meta
    payloads: list[bytes] = []
    for name, value in tensors.items():
        array = np.asarray(value)
        code = _DTYPE_CODES.get(array.dtype.name)
        if code is None:
            raise ValueError(f"Unsupported dtype {array.dtype} for tensor {name}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or array.ndim > 0xFF:
            raise ValueError(f"Tensor {name} cannot be stored (name or rank too large)")
        header += struct.pack("<H", len(encoded)) + encoded
        header += struct.pack("<BB", code, array.ndim)
        header += struct.pack(f"<{array.ndim}Q", *array.shape)
        payloads.append(np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes())

    with open(path, "wb") as f:
        f.write(bytes(header))
        for payload in payloads:
            f.write(payload)
    return path


def load_tensors(path: Union[str, Path]) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """
    Read an archive written by `save_tensors`.

    Returns:
        (name → array, metadata)

    Raises:
        ValueError: If the file is not a tensor archive or is truncated
    """
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a tensor archive")
    version, count, meta_len = struct.unpack_from("<HII", raw, 4)
    if version != VERSION:
        raise ValueError(f"Unsupported archive version {version} in {path}")
    offset = 4 + struct.calcsize("<HII")
    metadata = json.loads(raw[offset:offset + meta_len].decode("utf-8"))
    offset += meta_len

    specs: list[tuple[str, np.dtype, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, rank = struct.unpack_from("<BB", raw, offset)
        offset += 2
        dims = struct.unpack_from(f"<{rank}Q", raw, offset)
        offset += 8 * rank
        specs.append((name, _CODE_DTYPES[code], tuple(int(d) for d in dims)))

    tensors: dict[str, np.ndarray] = {}
    for name, dtype, shape in specs:
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(raw):
            raise ValueError(f"{path} is truncated at tensor {name}")
        array = np.frombuffer(raw, dtype=dtype.newbyteorder("<"), count=nbytes // dtype.itemsize, offset=offset)
        tensors[name] = array.astype(dtype).reshape(shape)
        offset += nbytes
    return tensors, metadata
