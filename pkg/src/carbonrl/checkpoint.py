"""Flat, versioned tensor container used for actor checkpoints.

An uncompressed .npz holding one entry per named tensor (row-major) plus a
JSON metadata blob; loading never unpickles. Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_META_KEY = "__meta__"
_TENSOR_PREFIX = "tensor/"


class CheckpointError(RuntimeError):
    """Unreadable, unversioned, or structurally incompatible checkpoint."""


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named tensors and JSON-serializable metadata."""
    payload: dict[str, np.ndarray] = {}
    for name, tensor in tensors.items():
        payload[_TENSOR_PREFIX + name] = np.ascontiguousarray(tensor)
    full_meta = dict(meta or {})
    full_meta["format_version"] = FORMAT_VERSION
    blob = json.dumps(full_meta, sort_keys=True).encode()
    payload[_META_KEY] = np.frombuffer(blob, dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (tensors, meta); raises CheckpointError on bad containers."""
    try:
        with np.load(path, allow_pickle=False) as z:
            if _META_KEY not in z:
                raise CheckpointError(f"{path}: missing metadata entry")
            meta = json.loads(bytes(z[_META_KEY]))
            version = meta.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: unsupported format_version {version!r}")
            tensors = {
                key[len(_TENSOR_PREFIX):]: z[key].copy()
                for key in z.files
                if key.startswith(_TENSOR_PREFIX)
            }
            return tensors, meta
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def restore_into(tensors: dict[str, np.ndarray], target: dict[str, np.ndarray]) -> None:
    """Copy loaded tensors into live parameter arrays, validating names/shapes."""
    if set(tensors) != set(target):
        missing = set(target) - set(tensors)
        extra = set(tensors) - set(target)
        raise CheckpointError(f"tensor name mismatch: missing {missing or '{}'}, extra {extra or '{}'}")
    for name, src in tensors.items():
        dst = target[name]
        if src.shape != dst.shape:
            raise CheckpointError(f"shape mismatch for {name!r}: {src.shape} vs {dst.shape}")
        dst[:] = src.astype(dst.dtype, copy=False)
