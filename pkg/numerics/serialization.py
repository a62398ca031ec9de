"""
numerics/serialization.py — the tensor file format

A file is a sequence of entries. Each entry is

    uint32 (little-endian)  header length in bytes
    header                  UTF-8 JSON {"name": ..., "shape": [...], "dtype": "float32"}
    payload                 prod(shape) little-endian float32 values, row-major

Checkpoints and probe dumps both use it. Integer tensors (hardmax assignment
vectors) are stored as float32; they are small enough to round-trip exactly.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from marrprobe.exceptions import ArtifactIOError

logger = logging.getLogger(__name__)

_LE_F32 = np.dtype("<f4")


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = []
    for name, value in tensors.items():
        arr = np.ascontiguousarray(np.asarray(value), dtype=_LE_F32)
        header = json.dumps(
            {"name": name, "shape": list(arr.shape), "dtype": "float32"}, sort_keys=True
        ).encode("utf-8")
        chunks.append(struct.pack("<I", len(header)))
        chunks.append(header)
        chunks.append(arr.tobytes(order="C"))
    return b"".join(chunks)


def decode_tensors(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise ArtifactIOError(source, "truncated header length")
        (hlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        try:
            header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
            name, shape = header["name"], tuple(int(s) for s in header["shape"])
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ArtifactIOError(source, f"corrupt header at byte {pos}") from None
        if header.get("dtype") != "float32":
            raise ArtifactIOError(source, f"unsupported dtype {header.get('dtype')!r} for {name}")
        pos += hlen
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if pos + nbytes > len(blob):
            raise ArtifactIOError(source, f"truncated payload for {name}")
        out[name] = np.frombuffer(blob, dtype=_LE_F32, count=nbytes // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += nbytes
    return out


def save_tensors(path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensors(tensors))
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or "write failed") from exc
    logger.debug("wrote %d tensor(s) to %s", len(tensors), path)
    return path


def load_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or "missing or unreadable") from exc
    return decode_tensors(blob, source=str(path))
