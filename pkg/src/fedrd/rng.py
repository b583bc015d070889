"""Counter-based random streams.

Every random draw in a simulation is taken from a stream keyed by
``(master seed, purpose, party, iteration, ...)``. Streams are
Philox generators seeded through :class:`numpy.random.SeedSequence`
spawn keys, so a draw never depends on how many other draws were made
before it or on the order in which parties run.
"""

from __future__ import annotations

import numpy as np

# Purpose codes; part of the stream key, never reorder.
INIT = 0
DATA = 1
BATCH = 2
GAUSSIAN = 3
PBM_EMBED = 4
MASK_EMBED = 5
PBM_GRAD = 6
MASK_GRAD = 7
SPLIT = 8


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``key`` under master ``seed``."""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and stream key entries must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
