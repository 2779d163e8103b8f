"""Checkpoints: a JSON manifest next to a raw weight blob.

Blob layout: every array of the model, parameters first and then
normalization buffers, each group in sorted key order, stored as
little-endian IEEE 754 float64 in C order with no header or padding.
The manifest lists ``name``, ``group``, ``shape``, ``offset`` (in
values, not bytes) and records the blob's byte length.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError
from ..io import atomic_write
from .models import build_model

FORMAT = "invfeat-checkpoint"
VERSION = 1


def blob_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".bin")


def save_checkpoint(path, model, extra: dict | None = None):
    entries, chunks, offset = [], [], 0
    for group, store in (("params", model.params), ("buffers", model.buffers)):
        for name in sorted(store):
            arr = np.ascontiguousarray(store[name], dtype="<f8")
            entries.append({"name": name, "group": group, "shape": list(arr.shape), "offset": offset})
            chunks.append(arr.ravel())
            offset += arr.size
    blob = np.concatenate(chunks).astype("<f8").tobytes() if chunks else b""
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "model": model.config(),
        "dtype": "<f8",
        "blob": blob_path(path).name,
        "blob_bytes": len(blob),
        "arrays": entries,
        "extra": extra or {},
    }
    atomic_write(blob_path(path), blob)
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(model, extra)``."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, path) from None
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise ParseError("not an invfeat checkpoint (format/version mismatch)", None, path)
    raw = (path.parent / manifest["blob"]).read_bytes()
    if len(raw) != manifest["blob_bytes"]:
        raise ParseError(f"weight blob has {len(raw)} bytes, manifest says {manifest['blob_bytes']}",
                         None, path)
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    model = build_model(manifest["model"])
    stores = {"params": model.params, "buffers": model.buffers}
    seen = set()
    for e in manifest["arrays"]:
        store = stores[e["group"]]
        shape = tuple(e["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = flat[e["offset"] : e["offset"] + size].reshape(shape)
        if e["group"] == "params":
            if e["name"] not in store or store[e["name"]].shape != shape:
                raise ParseError(f"parameter {e['name']} does not fit the architecture", None, path)
            store[e["name"]][...] = arr
        else:
            store[e["name"]] = arr.copy()
        seen.add((e["group"], e["name"]))
    missing = [k for k in model.params if ("params", k) not in seen]
    if missing:
        raise ParseError(f"checkpoint lacks parameters {missing[:3]}", None, path)
    return model, manifest.get("extra", {})
