"""Model checkpoint file format.

Layout: magic "CSNN1", uint32 LE header length, UTF-8 JSON header
(architecture, layout, training metadata), then the parameter payload as
little-endian float64. Headers are serialized with sorted keys so a
retrained model with identical results is byte-identical on disk.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import MalformedFileError
from .arch import ArchDescriptor, ModelParams

CHECKPOINT_MAGIC = b"CSNN1"


def encode_checkpoint(params: ModelParams, meta: dict | None = None) -> bytes:
    header = {
        "arch": params.arch.to_dict(),
        "layout": {name: [offset, list(shape)] for name, (offset, shape) in params.layout.items()},
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.asarray(params.values, dtype="<f8").tobytes()
    return CHECKPOINT_MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + payload


def decode_checkpoint(raw: bytes) -> tuple[ModelParams, dict]:
    magic_len = len(CHECKPOINT_MAGIC)
    if len(raw) < magic_len + 4 or raw[:magic_len] != CHECKPOINT_MAGIC:
        raise MalformedFileError("not a CSNN1 checkpoint")
    (header_len,) = struct.unpack("<I", raw[magic_len : magic_len + 4])
    header_end = magic_len + 4 + header_len
    if len(raw) < header_end:
        raise MalformedFileError("truncated checkpoint header")
    try:
        header = json.loads(raw[magic_len + 4 : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"bad checkpoint header: {exc}") from exc
    arch = ArchDescriptor.from_dict(header["arch"])
    values = np.frombuffer(raw, dtype="<f8", offset=header_end).astype(np.float64)
    if values.shape[0] != arch.parameter_count():
        raise MalformedFileError(
            f"payload has {values.shape[0]} values, architecture wants {arch.parameter_count()}"
        )
    return ModelParams(values=values, arch=arch), header.get("meta", {})


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(params, meta))


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    return decode_checkpoint(Path(path).read_bytes())
