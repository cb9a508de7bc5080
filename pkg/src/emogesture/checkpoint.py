"""Checkpoint container.

A checkpoint is an uncompressed ``.npz`` archive: one float array per named
parameter or buffer (``<group>/<name>``) plus ``__meta__``, a UTF-8 JSON blob
stored as a uint8 array::

    {"format": "emogesture-ckpt/1", "kind": "generator" | "emotion-vae" | "evaluators",
     "config": {...}, ...}

Arrays are stored in their torch dtype (float32 for weights, int64/bool for
buffers) so a reload is bit-exact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .errors import LoadError, MissingArtifactError

CKPT_FORMAT = "emogesture-ckpt/1"


def save_checkpoint(path, modules: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for group, module in modules.items():
        for name, tensor in module.state_dict().items():
            arrays[f"{group}/{name}"] = tensor.detach().cpu().numpy()
    meta = dict(meta, format=CKPT_FORMAT)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)
    return path


def load_checkpoint(path, kind: str | None = None):
    """Return ``(meta, {group: state_dict})``."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint {path} does not exist")
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            groups = {}
            for key in data.files:
                if key == "__meta__":
                    continue
                group, name = key.split("/", 1)
                groups.setdefault(group, {})[name] = torch.from_numpy(data[key].copy())
    except (OSError, ValueError, KeyError) as exc:
        raise LoadError(f"{path}: unreadable checkpoint ({exc})") from None
    if meta.get("format") != CKPT_FORMAT:
        raise LoadError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
    if kind is not None and meta.get("kind") != kind:
        raise LoadError(f"{path}: expected a {kind} checkpoint, found {meta.get('kind')!r}")
    return meta, groups


def state_checksum(module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()
