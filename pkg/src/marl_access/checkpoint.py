"""Binary checkpoint container.

Byte layout (all integers little-endian)::

    magic        8 bytes   b"MARLCKPT"
    version      uint32    currently 1
    meta_len     uint32    length of the JSON metadata that follows
    meta         meta_len bytes of UTF-8 JSON
    num_blocks   uint32
    block * num_blocks:
        name_len uint16
        name     name_len bytes UTF-8, dotted namespace (e.g. "online.dense1.w")
        dtype    uint8     0 = float32, 1 = float64, 2 = int64
        ndim     uint8
        shape    ndim * uint32
        data     prod(shape) * itemsize bytes, C order, little-endian

Arrays are written with their exact bits, so a save/load round trip is
lossless.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"MARLCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


class CheckpointError(ValueError):
    pass


def dumps(blocks: dict, meta: dict | None = None) -> bytes:
    out = bytearray(MAGIC)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    out += struct.pack("<II", VERSION, len(meta_bytes))
    out += meta_bytes
    out += struct.pack("<I", len(blocks))
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        code = _CODES[arr.dtype]
        raw_name = name.encode("utf-8")
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    return bytes(out)


def loads(data: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if data[:8] != MAGIC:
        raise CheckpointError("bad magic header")
    version, meta_len = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    meta = json.loads(data[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    blocks = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        code, ndim = struct.unpack_from("<BB", data, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        dtype = _DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(data[pos : pos + size], dtype=dtype).reshape(shape)
        blocks[name] = arr.astype(dtype.newbyteorder("="), copy=True)
        pos += size
    if pos != len(data):
        raise CheckpointError("trailing bytes after last block")
    return blocks, meta


def save(path, blocks: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(blocks, meta))


def load(path):
    return loads(Path(path).read_bytes())


def namespaced(prefix: str, params: dict) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((f"{prefix}.{k}", v) for k, v in params.items())


def extract(prefix: str, blocks: dict) -> "OrderedDict[str, np.ndarray]":
    head = prefix + "."
    return OrderedDict((k[len(head) :], v) for k, v in blocks.items() if k.startswith(head))
