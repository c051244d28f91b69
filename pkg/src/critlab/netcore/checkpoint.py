"""Flat binary parameter checkpoints.

Layout (all integers little-endian):

    magic      4 bytes  b"CLCK"
    version    u32      1
    spec_hash  32 bytes sha256 of the NetworkSpec JSON
    spec_len   u32      length of the NetworkSpec JSON
    spec_json  bytes    UTF-8
    n_params   u32
    per parameter, in declaration order:
        name_len u16, name UTF-8, ndim u8, dims u32 * ndim
    data       float32 little-endian, every parameter in declaration order,
               each flattened in C order
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .network import NetworkSpec, ParamSet

MAGIC = b"CLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, spec: NetworkSpec, params: ParamSet) -> None:
    spec_json = spec.to_json().encode()
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += bytes.fromhex(spec.hash)
    out += struct.pack("<I", len(spec_json)) + spec_json
    out += struct.pack("<I", len(params))
    for name, arr in params.arrays.items():
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    for arr in params.arrays.values():
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[NetworkSpec, ParamSet]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    spec_hash = buf[8:40].hex()
    (spec_len,) = struct.unpack_from("<I", buf, 40)
    pos = 44
    spec = NetworkSpec.from_dict(json.loads(buf[pos:pos + spec_len].decode()))
    pos += spec_len
    if spec.hash != spec_hash:
        raise CheckpointError(f"{path}: spec hash mismatch")
    (n_params,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    shapes = []
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + name_len].decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        shapes.append((name, dims))
    arrays = OrderedDict()
    for name, dims in shapes:
        count = int(np.prod(dims, dtype=np.int64))
        arrays[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).astype(np.float64).reshape(dims)
        pos += 4 * count
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return spec, ParamSet(arrays)


def read_spec_hash(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(40)
    if head[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    return head[8:40].hex()
