"""Deterministic sub-seed derivation for tagged stochastic stages.

Every stochastic stage in the engine draws from a ``numpy`` Generator seeded
by ``derive_seed(master, *tags)``.  Tags name the stage (and its inputs, e.g.
domain names or layer index) so that independent stages get independent
streams, while identical (master, tags) always reproduce the same stream.
"""

from __future__ import annotations

import hashlib

SEED_DERIVATION = "blake2b-64(master_seed, *tags)"

_SEP = b"\x1f"


def derive_seed(master: int, *tags: object) -> int:
    """Hash a master seed plus stage tags into a 63-bit child seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(_SEP)
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little") & ((1 << 63) - 1)
