"""Versioned binary model container.

Layout (little-endian): magic b"SFCK", version u16, u32-length-prefixed
config JSON, every parameter tensor in the fixed declared order as raw
float32, and a trailing CRC32 of all preceding bytes. Loading verifies
the checksum and rejects config mismatches field by field.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, DataFormatError
from .model import ModelConfig, ModelParams

MAGIC = b"SFCK"
VERSION = 1


def save_checkpoint(path: str | Path, params: ModelParams) -> None:
    cfg_json = json.dumps(asdict(params.cfg), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<H", VERSION),
             struct.pack("<I", len(cfg_json)), cfg_json]
    for _, tensor in params.named_tensors():
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path,
                    expected_cfg: ModelConfig | None = None) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise DataFormatError("checkpoint too short", offset=0)
    if raw[:4] != MAGIC:
        raise DataFormatError(f"bad checkpoint magic {raw[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", offset=4)
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise DataFormatError("checkpoint checksum mismatch", offset=len(raw) - 4)
    (cfg_len,) = struct.unpack_from("<I", raw, 6)
    cfg_dict = json.loads(raw[10:10 + cfg_len].decode())
    cfg = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                         for k, v in cfg_dict.items()})
    if expected_cfg is not None:
        for key, want in asdict(expected_cfg).items():
            have = getattr(cfg, key)
            if isinstance(want, (list, tuple)):
                differs = tuple(have) != tuple(want)
            else:
                differs = have != want
            if differs:
                raise CompatibilityError(
                    f"checkpoint config mismatch on {key}: file has {have}, expected {want}")
    params = ModelParams(cfg, seed=0, dtype=np.float32)
    offset = 10 + cfg_len
    for name, tensor in params.named_tensors():
        count = tensor.size
        end = offset + 4 * count
        if end > len(raw) - 4:
            raise DataFormatError(f"checkpoint truncated in tensor {name}", offset=offset)
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        tensor.data = values.reshape(tensor.shape).astype(np.float32)
        offset = end
    if offset != len(raw) - 4:
        raise DataFormatError("checkpoint has trailing bytes", offset=offset)
    return params
