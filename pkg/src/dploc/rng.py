"""Deterministic random streams derived from a single master seed.

Every stage of the pipeline (partition noising, per-region generation,
per-edge generation, ...) draws from its own stream, keyed by a stage name
and an integer index. Streams are independent Philox generators, so results
do not depend on scheduling or worker count: whoever processes region 17
gets region 17's stream.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=None)
def _stage_base(seed: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{stage}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """Return the generator for (seed, stage, index).

    (seed, stage) is hashed once into a 128-bit Philox key base; the index
    is folded into the low word, so per-region stream construction stays
    cheap. Distinct triples give independent streams.
    """
    key = _stage_base(seed, stage) ^ (index & _MASK64)
    return np.random.Generator(np.random.Philox(key=key or 1))


def derive_seed(seed: int, *parts: object) -> int:
    """Fold arbitrary labels into a new 63-bit master seed (for sweep cells)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest(), "little") >> 1
