"""Hashing helpers shared across modules.

Placement and content addressing must be stable across processes and runs,
so everything routes through blake2b rather than Python's salted hash().
"""

from __future__ import annotations

import hashlib
import json


def stable_hash(text: str) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
