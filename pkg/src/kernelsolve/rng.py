"""Seed derivation for all randomness in the library.

Every random draw anywhere in the pipeline descends from one 64-bit root
seed through `derive_seed`, a splitmix64 mix of the root and a key path.
Derived streams are independent of traversal or thread order, which is what
makes parallel sweeps bit-identical to serial ones.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(root: int, *keys: int) -> int:
    """Mix a root seed with a key path into a new 64-bit seed.

    Distinct key paths give statistically independent streams; the same
    path always gives the same seed.
    """
    state = _splitmix64(root & _MASK)
    for key in keys:
        state = _splitmix64(state ^ (key & _MASK))
    return state


def generator(root: int, *keys: int) -> np.random.Generator:
    """A PCG64 generator seeded from `derive_seed(root, *keys)`."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *keys)))
