"""Seeded random-number streams.

Every run derives all randomness from a single root seed. Components pull
named sub-streams so that, e.g., sampling can be re-run in isolation without
re-playing the training draws. Stream derivation is pure arithmetic on the
seed, so results are stable across processes and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return the generator for sub-stream `name` (plus optional cell indices).

    The same (seed, name, indices) triple always yields an identical stream.
    """
    entropy = [int(seed), zlib.crc32(name.encode("utf-8"))]
    entropy.extend(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))
