"""Keyed random number streams.

Every stochastic choice in the package draws from a generator derived from
an integer seed plus a tuple of integer keys.  Streams for different keys
are independent, and a given key always yields the same stream, so results
do not depend on batch composition, iteration order, or any parallel
schedule.
"""

import numpy as np


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a generator that is a pure function of (seed, key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
