"""Checkpoint files: a JSON manifest plus a raw little-endian float32 blob.

The manifest lists ``{name, shape, dtype, byte_offset, byte_length}`` per
parameter in blob order. Writes go through a temporary file and a rename.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable

import numpy as np

from .tensor import Parameter

_DTYPE = "<f4"


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def save_checkpoint(params: Iterable[Parameter], manifest_path, extra: dict | None = None) -> Path:
    """Write ``<stem>.json`` and ``<stem>.bin``; returns the manifest path."""
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    entries, chunks, offset = [], [], 0
    seen = set()
    for p in params:
        if p.name in seen:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        seen.add(p.name)
        raw = np.ascontiguousarray(p.data, dtype=_DTYPE).tobytes()
        entries.append({
            "name": p.name,
            "shape": list(p.shape),
            "dtype": "f32le",
            "byte_offset": offset,
            "byte_length": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    manifest = {"blob": blob_path.name, "parameters": entries}
    if extra:
        manifest.update(extra)
    _atomic_write(blob_path, b"".join(chunks))
    _atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True).encode())
    return manifest_path


def read_checkpoint(manifest_path) -> tuple[dict, dict]:
    """Return ``(arrays_by_name, manifest)``; arrays are float32."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    arrays = {}
    for e in manifest["parameters"]:
        start, n = e["byte_offset"], e["byte_length"]
        if start + n > len(blob):
            raise ValueError(f"blob too short for parameter {e['name']!r}")
        arr = np.frombuffer(blob[start:start + n], dtype=_DTYPE).reshape(e["shape"])
        arrays[e["name"]] = arr.copy()
    return arrays, manifest


def load_checkpoint(params: Iterable[Parameter], manifest_path) -> dict:
    """Load values into ``params`` by name; shapes and name sets must match exactly."""
    arrays, manifest = read_checkpoint(manifest_path)
    params = list(params)
    names = {p.name for p in params}
    missing = names - arrays.keys()
    unexpected = arrays.keys() - names
    if missing or unexpected:
        raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
    for p in params:
        arr = arrays[p.name]
        if tuple(arr.shape) != p.shape:
            raise ValueError(f"shape mismatch for {p.name!r}: {arr.shape} vs {p.shape}")
        p.data = arr.astype(p.dtype)
    return manifest
