"""Seed derivation shared by every stage.

All randomness in the package flows from integer seeds combined with
structural keys (class index, member position, run index, stage name), so a
result never depends on call order or thread scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_words(key) -> list[int]:
    if isinstance(key, (bool, np.bool_)):
        return [int(key)]
    if isinstance(key, (int, np.integer)):
        value = int(key)
        # sign goes in its own word so -1 and 2**64 - 1 stay distinct
        return [0 if value >= 0 else 1, abs(value) & _MASK64, abs(value) >> 64]
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 32, 8)]
    raise TypeError(f"seed keys must be int or str, got {type(key).__name__}")


def derive_rng(*keys) -> np.random.Generator:
    """Independent generator for the tuple ``keys``."""
    words: list[int] = []
    for key in keys:
        words.extend(_key_words(key))
    return np.random.default_rng(np.random.SeedSequence(words))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed derived from ``keys`` (usable by torch and numpy)."""
    return int(derive_rng(*keys).integers(0, 2**63 - 1))
