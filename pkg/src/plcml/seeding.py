"""Deterministic seed derivation.

Every random stream in the package descends from one root seed.  A child
seed is a 64-bit mix of the parent seed and a stable text label, so adding
a new task never shifts the streams of existing ones.
"""

import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def child_seed(parent: int, label) -> int:
    """Return the 64-bit seed of the stream ``label`` under ``parent``."""
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    return _splitmix64((int(parent) & _MASK) ^ _splitmix64(h))


def rng_for(parent: int, label) -> np.random.Generator:
    return np.random.default_rng(child_seed(parent, label))
