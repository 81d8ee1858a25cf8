"""Parameter checkpoints.

A checkpoint is an ``.npz`` archive holding the arrays ``p0, p1, ...`` in
``parameters()`` order plus a ``meta`` entry: UTF-8 JSON with the format
version, the array shapes, the model kind and a hash of the training config.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

from ..errors import CheckpointError

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model, kind: str, config_hash: str = "") -> None:
    params = model.parameters()
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "shapes": [list(p.shape) for p in params],
    }
    arrays = {f"p{i}": p for i, p in enumerate(params)}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path) -> tuple[list[np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            params = [data[f"p{i}"] for i in range(len(meta["shapes"]))]
    except (OSError, KeyError, ValueError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
    return params, meta


def load_checkpoint(path, model, kind: str | None = None) -> dict:
    """Copy checkpointed parameters into ``model`` after checking kind and shapes."""
    params, meta = read_checkpoint(path)
    if kind is not None and meta["kind"] != kind:
        raise CheckpointError(f"checkpoint holds a {meta['kind']!r}, expected {kind!r}")
    target = model.parameters()
    want = [list(p.shape) for p in target]
    if meta["shapes"] != want:
        raise CheckpointError(f"shape mismatch: checkpoint {meta['shapes']} vs model {want}")
    for dst, src in zip(target, params):
        dst[...] = src
    return meta
