"""
Checkpoint Store — bit-exact checkpoint container.

File layout:
    bytes 0..7    magic  b"MTGROW01"
    bytes 8..15   header length, unsigned little-endian
    header        canonical UTF-8 JSON (sorted keys, compact separators):
                  {format_version, config, vocab, step, tensors}
                  tensors: name -> {dtype: "f64le", shape, offset, length}
    blobs         raw little-endian float64 tensors, contiguous, in sorted
                  name order; offsets are relative to the first blob byte

Adam moments are stored as ordinary tensors named moment.m.<param> and
moment.v.<param>. Loading fails closed: nothing is returned unless every
check passes.
"""

import json
import logging
import os
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import ValidationError

from app.exceptions import (
    BadMagicError,
    CheckpointError,
    IndexMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from app.models.checkpoint import Checkpoint
from app.models.tensor import Tensor
from app.models.transformer import ModelConfig
from app.models.vocab import Vocab

logger = logging.getLogger(__name__)

MAGIC = b"MTGROW01"
FORMAT_VERSION = 1
DTYPE_TAG = "f64le"
MOMENT_M, MOMENT_V = "moment.m.", "moment.v."
_PREFIX = struct.Struct("<8sQ")


def _tensors_of(ckpt: Checkpoint) -> Dict[str, np.ndarray]:
    tensors = {name: t.data for name, t in ckpt.params.items()}
    for name, (m, v) in ckpt.moments.items():
        tensors[MOMENT_M + name] = m
        tensors[MOMENT_V + name] = v
    return dict(sorted(tensors.items()))


def serialize(ckpt: Checkpoint) -> bytes:
    """Container bytes; equal checkpoints always give identical bytes."""
    ckpt.validate()
    tensors = _tensors_of(ckpt)
    index = {}
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index[name] = {"dtype": DTYPE_TAG, "shape": list(arr.shape), "offset": offset, "length": len(raw)}
        blobs.append(raw)
        offset += len(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.model_dump(mode="json"),
        "vocab": list(ckpt.vocab.tokens),
        "step": int(ckpt.step),
        "tensors": index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _PREFIX.pack(MAGIC, len(header_bytes)) + header_bytes + b"".join(blobs)


def save(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = serialize(ckpt)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    logger.info("Saved checkpoint %s (step %d, %d bytes)", path, ckpt.step, len(payload))
    return path


def deserialize(payload: bytes) -> Checkpoint:
    # 1. Fixed prefix
    if len(payload) < _PREFIX.size:
        raise TruncatedCheckpointError(f"file holds {len(payload)} bytes, prefix needs {_PREFIX.size}")
    magic, header_len = _PREFIX.unpack_from(payload, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    blob_start = _PREFIX.size + header_len
    if len(payload) < blob_start:
        raise TruncatedCheckpointError(f"header claims {header_len} bytes but file ends at {len(payload)}")

    # 2. Header
    try:
        header = json.loads(payload[_PREFIX.size:blob_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}")
    if not isinstance(header, dict):
        raise CheckpointError("checkpoint header is not a JSON object")
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format_version {header.get('format_version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    for key in ("config", "vocab", "step", "tensors"):
        if key not in header:
            raise IndexMismatchError(f"checkpoint header lacks '{key}'")

    # 3. Tensor index
    index = header["tensors"]
    expected_offset = 0
    for name in sorted(index):
        entry = index[name]
        if entry.get("dtype") != DTYPE_TAG:
            raise IndexMismatchError(f"{name}: unsupported dtype {entry.get('dtype')!r}")
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        if entry["length"] != count * 8:
            raise IndexMismatchError(
                f"{name}: length {entry['length']} disagrees with shape {entry['shape']} ({count * 8} bytes)"
            )
        if entry["offset"] != expected_offset:
            raise IndexMismatchError(f"{name}: offset {entry['offset']} expected {expected_offset}")
        expected_offset += entry["length"]
    available = len(payload) - blob_start
    if available < expected_offset:
        raise TruncatedCheckpointError(f"blobs need {expected_offset} bytes, file holds {available}")
    if available > expected_offset:
        raise IndexMismatchError(f"{available - expected_offset} trailing bytes after the last tensor")

    # 4. Tensors
    arrays = {}
    for name, entry in index.items():
        start = blob_start + entry["offset"]
        raw = payload[start:start + entry["length"]]
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])

    try:
        config = ModelConfig(**header["config"])
    except ValidationError as exc:
        raise IndexMismatchError(f"invalid model config in checkpoint: {exc}")

    params = {}
    moments = {}
    for name, arr in arrays.items():
        if name.startswith(MOMENT_M):
            base = name[len(MOMENT_M):]
            if MOMENT_V + base not in arrays:
                raise IndexMismatchError(f"{base}: first moment stored without second moment")
            moments[base] = (arr, arrays[MOMENT_V + base])
        elif name.startswith(MOMENT_V):
            if MOMENT_M + name[len(MOMENT_V):] not in arrays:
                raise IndexMismatchError(f"{name[len(MOMENT_V):]}: second moment stored without first moment")
        else:
            params[name] = Tensor(arr, requires_grad=True)

    ckpt = Checkpoint(
        config=config,
        vocab=Vocab(header["vocab"]),
        params=dict(sorted(params.items())),
        moments=dict(sorted(moments.items())),
        step=int(header["step"]),
    )
    try:
        ckpt.validate()
    except CheckpointError as exc:
        raise IndexMismatchError(exc.detail)
    return ckpt


def load(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    ckpt = deserialize(path.read_bytes())
    logger.info("Loaded checkpoint %s (step %d, %d tensors)", path, ckpt.step, len(ckpt.params))
    return ckpt
