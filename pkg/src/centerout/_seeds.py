"""Named random streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(master, name: str) -> np.random.Generator:
    """Independent generator for ``name``; the same (master, name) always gives the same stream."""
    if isinstance(master, np.random.Generator):
        return master
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(key,)))


def rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
