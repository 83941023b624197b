"""Checkpoint bundles: npz weight dump plus a JSON metadata header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict, meta: dict) -> None:
    path = Path(path)
    meta = dict(meta)
    meta["format_version"] = FORMAT_VERSION
    payload = {f"arr.{k}": np.asarray(v) for k, v in arrays.items()}
    payload["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    path = Path(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version in {path}")
        arrays = {k[4:]: data[k] for k in data.files if k.startswith("arr.")}
    return arrays, meta
