"""Reproducible random substreams.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by ``(rng_seed, stream, *indices)``.  Two calls with the
same key return statistically independent-of-everything-else but
bit-identical generators, so time segments can be produced in any order
or in parallel without changing the result.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    PAIRS = 1
    BACKGROUND = 2
    THIN = 3
    DARK = 4
    CHARGE = 5
    BOOTSTRAP = 6
    MISC = 7


def substream(rng_seed, stream, *indices):
    """Return an independent generator for ``(rng_seed, stream, *indices)``."""
    seed = int(rng_seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"rng_seed must be an unsigned 64-bit integer, got {rng_seed}")
    key = (int(stream),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
