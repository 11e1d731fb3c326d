"""Deterministic seeding helpers.

Every random object in the package is keyed by a 64-bit seed plus a tuple of
integer coordinates (a stream tag, a time cell, a mass band, ...).  Keys are
folded with splitmix64 and fed to a counter-based Philox generator, so any
region of any stream can be regenerated bit-exactly without storing state.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags
SHEET = 1
ATOMS = 2
TREE = 3
MARKS = 4
BATCH = 5
LAMPERTI = 6


def splitmix64(z: int) -> int:
    """One splitmix64 scrambling round (public-domain constants)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fold(*parts: int) -> int:
    """Fold integer coordinates into a single 64-bit key."""
    h = 0x8000000000000000
    for p in parts:
        h = splitmix64((h ^ (int(p) & _MASK64)) & _MASK64)
    return h


def generator(*parts: int) -> np.random.Generator:
    """Philox generator keyed by the folded coordinates."""
    return np.random.Generator(np.random.Philox(key=fold(*parts)))


def replica_seed(seed: int, index: int) -> int:
    """Per-replica seed: growing the replica count never reshuffles earlier ones."""
    return (int(seed) ^ splitmix64(index)) & _MASK64
