"""Reproducibility and persistence helpers.

Randomness is counter-based (Philox) and keyed by ``(seed, tag)`` so that
parallel or reordered execution cannot change any result.  All result files
are written atomically (temp file + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, purpose tag)."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    tag_key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, tag_key]))


def stable_hash(obj) -> str:
    """Short hex hash of a JSON-serializable object, stable across runs."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def atomic_write_text(path: str, text: str) -> None:
    """Write text so that a crash never leaves a partial file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    """Deterministic shortest round-trip float formatting for CSV output."""
    return repr(float(x))
