"""Hashing and seeded random sub-streams."""

from __future__ import annotations

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def fnv1a64_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


def substream_seed(seed: int, label: str, index: int = 0) -> int:
    """Derive a 64-bit seed for the sub-stream ``(label, index)`` of ``seed``."""
    key = f"{int(seed) & MASK64}:{label}:{int(index)}".encode()
    return fnv1a64(key)


def substream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, label, index))
