"""Versioned binary container shared by checkpoints and dataset files.

Layout (all integers little-endian)::

    magic        8 bytes   b"BIPDECKP" (checkpoint) or b"BIPDEDAT" (dataset)
    version      uint32
    header_len   uint32
    header       header_len bytes of UTF-8 JSON (sorted keys, compact)
    payload      arrays as raw little-endian float64, in header order

The header carries an ``arrays`` list of ``{"name", "shape"}`` records and a
free-form ``meta`` mapping.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"BIPDECKP"
DATASET_MAGIC = b"BIPDEDAT"
FORMAT_VERSION = 1

_FLOAT = np.dtype("<f8")


class ContainerError(ValueError):
    """Malformed, truncated or incompatible container file."""


def dumps(magic: bytes, arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    records = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=_FLOAT)
        records.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"arrays": records, "meta": meta}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    head = magic + struct.pack("<II", FORMAT_VERSION, len(header))
    return head + header + b"".join(blobs)


def loads(blob: bytes, magic: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < 16 or blob[:8] != magic:
        raise ContainerError(f"bad magic bytes, expected {magic!r}")
    version, header_len = struct.unpack("<II", blob[8:16])
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {version} (expected {FORMAT_VERSION})")
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header: {exc}") from exc
    offset = 16 + header_len
    arrays = {}
    for rec in header.get("arrays", []):
        shape = tuple(int(n) for n in rec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * _FLOAT.itemsize
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise ContainerError(f"array '{rec['name']}' is truncated")
        arrays[rec["name"]] = np.frombuffer(chunk, dtype=_FLOAT).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(blob):
        raise ContainerError(f"{len(blob) - offset} trailing bytes after payload")
    return arrays, header.get("meta", {})


def write(path, magic: bytes, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(magic, arrays, meta))
    return path


def read(path, magic: bytes) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes(), magic)
