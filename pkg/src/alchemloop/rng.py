"""Counter-based child seeds derived from one master seed.

A phase is named by a string and an integer index (usually the iteration
number).  Its generator depends only on ``(master, crc32(name), index)``,
so adding or reordering phases never perturbs the randomness of others.
"""

from __future__ import annotations

import zlib

import numpy as np


def phase_seed(master: int, name: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(name.encode()), int(index)))


def phase_rng(master: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(phase_seed(master, name, index))


def phase_int(master: int, name: str, index: int = 0) -> int:
    """A 31-bit integer seed for components configured with plain ints."""
    return int(phase_seed(master, name, index).generate_state(1)[0] & 0x7FFFFFFF)
