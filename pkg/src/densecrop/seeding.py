"""Deterministic rng derivation.

All randomness in the toolkit flows from a single root seed. Instead of
threading generator state through the pipeline, each consumer derives a
fresh generator from (root seed, purpose, context...) so that runs are
bit-reproducible, resumable mid-stream, and independent of worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stable_int", "rng_for"]


def stable_int(value: int | str | float) -> int:
    """Map an id-like value to a stable non-negative integer across runs."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value & 0xFFFFFFFF
    return zlib.crc32(repr(value).encode("utf-8"))


def rng_for(*parts: int | str | float) -> np.random.Generator:
    """Generator seeded purely by the given parts, in order."""
    return np.random.default_rng([stable_int(p) for p in parts])
