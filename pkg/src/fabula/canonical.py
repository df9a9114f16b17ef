"""Canonical serialization and stable hashing.

Everything that must be byte-reproducible (traces, snapshots, scenario
documents, cassette keys) funnels through these helpers: canonical JSON is
sorted-key UTF-8 with no insignificant whitespace, so byte equality of two
serializations means structural equality.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a over the given bytes (strings are UTF-8 encoded)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def split_seed(root: int, entity: str, step: int, ordinal: int) -> int:
    """Derive a per-call seed from the run's root seed.

    Deterministic in (entity, step, ordinal) so concurrent execution order
    cannot perturb sampling.
    """
    return fnv1a64(f"{root}|{entity}|{step}|{ordinal}")
