"""Deterministic RNG stream derivation.

Streams are derived by hashing a key tuple (root seed, sample id, round,
...) so that parallel evaluation order cannot change what any one stream
produces.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed_sequence(*keys: int | str) -> np.random.SeedSequence:
    digest = hashlib.sha256(repr(tuple(keys)).encode("utf-8")).digest()
    entropy = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    return np.random.SeedSequence(entropy)


def derive_rng(*keys: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(*keys))
