"""Seed derivation for independent, reproducible random sub-streams.

Every random draw in the package starts from a master seed and a stream
index, mixed with the splitmix64 finalizer so that neighbouring indices
give uncorrelated child seeds.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seed(master_seed: int, *stream: int) -> int:
    """Mix ``master_seed`` with one or more stream indices into a 64-bit seed."""
    z = int(master_seed) & _MASK
    for index in stream:
        z = (z + (int(index) + 1) * GOLDEN_GAMMA) & _MASK
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        z ^= z >> 31
    return z


def rng_for(master_seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *stream))
