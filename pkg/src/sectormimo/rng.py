"""Deterministic seed derivation for parallel Monte Carlo.

Every random stream in the simulator is keyed by a 64-bit seed derived
from the master seed and a tuple of integer labels (drop index, purpose
tag, chunk index, ...). The derivation is a splitmix64 chain, so child
seeds are reproducible across platforms and independent of execution
order, which is what makes multi-worker runs bit-identical to serial
runs.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *labels: int) -> int:
    """Mix a master seed with integer labels into a new 64-bit seed."""
    s = master & _MASK
    for lab in labels:
        s = _splitmix64(s ^ _splitmix64(lab & _MASK))
    return s


def make_generator(master: int, *labels: int) -> np.random.Generator:
    """PCG64 generator seeded from ``derive_seed(master, *labels)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *labels)))
