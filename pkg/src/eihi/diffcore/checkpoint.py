"""Flat binary parameter checkpoints.

Layout: magic "EIHI", format version u32, u32 length-prefixed UTF-8 JSON
layer spec, then each parameter tensor as (rank u32, extents u64[], f64
little-endian values) in canonical order. Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .backbone import BackboneParams, BackboneSpec
from .tensor import Tensor

MAGIC = b"EIHI"
FORMAT_VERSION = 1


def checkpoint_bytes(params: BackboneParams) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    spec_json = json.dumps(params.spec.to_json_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(spec_json)))
    buf.write(spec_json)
    for p in params.params:
        shape = p.values.shape
        buf.write(struct.pack("<I", len(shape)))
        for extent in shape:
            buf.write(struct.pack("<Q", extent))
        buf.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(params: BackboneParams, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))


def load_checkpoint(path: str | Path) -> BackboneParams:
    raw = Path(path).read_bytes()
    return checkpoint_from_bytes(raw, source=str(path))


def checkpoint_from_bytes(raw: bytes, source: str = "<bytes>") -> BackboneParams:
    buf = io.BytesIO(raw)
    if buf.read(4) != MAGIC:
        raise ContractError(f"{source}: not a parameter checkpoint (bad magic)")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != FORMAT_VERSION:
        raise ContractError(f"{source}: unsupported checkpoint version {version}")
    (spec_len,) = struct.unpack("<I", buf.read(4))
    spec = BackboneSpec.from_json_dict(json.loads(buf.read(spec_len).decode("utf-8")))

    expected = spec.param_shapes()
    tensors: list[Tensor] = []
    for shape_expected in expected:
        rank_bytes = buf.read(4)
        if len(rank_bytes) < 4:
            raise ContractError(f"{source}: truncated checkpoint")
        (rank,) = struct.unpack("<I", rank_bytes)
        extents = struct.unpack(f"<{rank}Q", buf.read(8 * rank))
        count = int(np.prod(extents)) if extents else 1
        payload = buf.read(8 * count)
        if len(payload) < 8 * count:
            raise ContractError(f"{source}: truncated tensor payload")
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(extents)
        if tuple(extents) != tuple(shape_expected):
            raise ContractError(
                f"{source}: tensor shape {extents} does not match spec shape {shape_expected}"
            )
        tensors.append(Tensor(values.copy(), requires_grad=True))
    if buf.read(1):
        raise ContractError(f"{source}: trailing bytes after final tensor")
    return BackboneParams(spec, tensors)


def params_checksum(params: BackboneParams) -> str:
    return hashlib.sha256(checkpoint_bytes(params)).hexdigest()
