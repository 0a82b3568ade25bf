"""Binary model files.

Layout (all integers big-endian unless noted)::

    magic "DCIM" | u16 version | u32 header length | header JSON (utf-8)
    per block:  u16 name length | name | u8 ndim | u32 dims... |
                u32 crc32 | float32 little-endian data

The header carries the model kind and config, the schema hash, the field
permutation and the training metadata.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, CorruptInputError
from ..schema import DciSchema
from .features import TokenLayout
from .rnn import BitGru, RnnConfig
from .training import TrainedModel
from .transformer import DciTransformer, TransformerConfig

MAGIC = b"DCIM"
VERSION = 1


def dumps(model: TrainedModel) -> bytes:
    header = {
        "kind": model.kind,
        "config": model.module.cfg.to_dict(),
        "schema_hash": model.schema.hash.hex(),
        "order": list(model.order),
        "metadata": model.metadata,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack(">HI", VERSION, len(hbytes)), hbytes]
    for name, tensor in model.module.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        data = arr.tobytes()
        nb = name.encode()
        chunks.append(struct.pack(">H", len(nb)) + nb)
        chunks.append(struct.pack(f">B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(struct.pack(">I", zlib.crc32(data)) + data)
    return b"".join(chunks)


def loads(data: bytes, schema: DciSchema) -> TrainedModel:
    if data[:4] != MAGIC:
        raise CorruptInputError("not a dcizip model file")
    version, hlen = struct.unpack_from(">HI", data, 4)
    if version != VERSION:
        raise CorruptInputError(f"unsupported model file version {version}")
    pos = 10
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    if bytes.fromhex(header["schema_hash"]) != schema.hash:
        raise ConfigError("model was trained for a different schema")
    order = tuple(header["order"])
    coded = schema.permuted(order)
    if header["kind"] == "transformer":
        cfg = TransformerConfig(**header["config"])
        module = DciTransformer(cfg, TokenLayout.from_schema(coded, cfg.L))
    elif header["kind"] == "rnn":
        module = BitGru(RnnConfig(**header["config"]), schema.N)
    else:
        raise CorruptInputError(f"unknown model kind {header['kind']!r}")
    state = {}
    while pos < len(data):
        (nlen,) = struct.unpack_from(">H", data, pos)
        name = data[pos + 2:pos + 2 + nlen].decode()
        pos += 2 + nlen
        ndim = data[pos]
        shape = struct.unpack_from(f">{ndim}I", data, pos + 1)
        pos += 1 + 4 * ndim
        (crc,) = struct.unpack_from(">I", data, pos)
        pos += 4
        size = 4 * int(np.prod(shape, dtype=np.int64))
        raw = data[pos:pos + size]
        if len(raw) != size or zlib.crc32(raw) != crc:
            raise CorruptInputError(f"checksum mismatch in parameter block {name!r}")
        pos += size
        state[name] = torch.from_numpy(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise CorruptInputError(f"parameter blocks do not match the model: {exc}") from None
    module.eval()
    return TrainedModel(header["kind"], module, schema, order, header["metadata"])


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path: str | Path, schema: DciSchema) -> TrainedModel:
    return loads(Path(path).read_bytes(), schema)
