"""Seeded random streams for reproducible runs.

All randomness flows through numpy's PCG64 generator. Child streams are
derived from a parent seed plus a path of labels, so results never depend
on how work is split across workers.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, *parts: object) -> int:
    """Derive a 64-bit child seed from a parent seed and a label path.

    Args:
        seed: Parent seed
        *parts: Labels identifying the child stream (stage name, index, ...)

    Returns:
        64-bit integer seed
    """
    text = "/".join([str(seed & SEED_MASK), *(str(p) for p in parts)])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    """Create a PCG64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & SEED_MASK))


def child_rng(seed: int, *parts: object) -> np.random.Generator:
    """Shortcut for make_rng(derive_seed(seed, *parts))."""
    return make_rng(derive_seed(seed, *parts))


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 64-bit seed from an existing generator."""
    return int(rng.integers(0, 1 << 63))


def randint(rng: np.random.Generator, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi], inclusive, as a Python int."""
    span = hi - lo + 1
    if span <= (1 << 62):
        return lo + int(rng.integers(0, span))
    # wider than int64 allows: combine two draws
    value = (int(rng.integers(0, 1 << 32)) << 32) | int(rng.integers(0, 1 << 32))
    return lo + value % span
