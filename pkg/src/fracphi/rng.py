"""Counter-based random streams keyed by (seed, replica, purpose).

Each stream is a Philox generator whose key comes from a
``SeedSequence(seed, spawn_key=keys)``; streams for different keys are
independent and a given key always reproduces the same draws, regardless of
how replicas are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

# purposes
INIT = 0
INCREMENTS = 1
SPLIT = 2


def stream(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
