"""
Named-tensor checkpoint container.

Layout:
    8 bytes   magic b"CUPIDCKP"
    4 bytes   format version, little-endian uint32
    8 bytes   header length, little-endian uint64
    header    UTF-8 JSON: {"tensors": [{"name", "shape", "offset"}...], "metadata": {...}}
    payload   little-endian float32 values, tensors back to back
"""
from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"CUPIDCKP"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


def save_checkpoint(path: str | Path, tensors: Dict[str, np.ndarray], metadata: Dict[str, Any] | None = None) -> Path:
    """Write tensors (in insertion order) and JSON-serialisable metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        data = np.asarray(value, dtype="<f4")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.size

    header = json.dumps({"tensors": entries, "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    tmp.replace(path)
    logger.info(f"Checkpoint saved to {path} ({len(entries)} tensors, {offset} values)")
    return path


def load_checkpoint(path: str | Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Return (name -> float64 array, metadata)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: expected {path}")
    raw = path.read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, header_len = _PREAMBLE.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")

    start = _PREAMBLE.size
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e

    payload = np.frombuffer(raw, dtype="<f4", offset=start + header_len)
    tensors: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = entry["offset"]
        if begin + count > payload.size:
            raise CheckpointError(f"{path}: payload too short for tensor {entry['name']}")
        tensors[entry["name"]] = payload[begin:begin + count].astype(np.float64).reshape(shape)
    return tensors, header.get("metadata", {})
