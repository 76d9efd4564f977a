"""Stable seed derivation.

Parallel per-utterance work stays reproducible by giving every unit its own
seed derived from the master seed and a string path.  The derivation hashes
with SHA-256, never Python's process-salted hash().
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts) -> int:
    """A 64-bit seed determined by (master, parts); order-sensitive."""
    h = hashlib.sha256(str(int(master)).encode("ascii"))
    for p in parts:
        h.update(b"\x00")
        h.update(str(p).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")
