"""Seeded random streams.

Every random draw in the package flows through a Philox counter-based
generator keyed by ``(stream_tag << 64) | (seed mod 2**64)``.  Distinct
stream tags yield independent streams for the same user-facing seed, so
the filter, the sparse inputs, the noise, and each solver restart never
share state, and results are identical under any execution schedule.
The experiment harness derives per-trial seeds as ``base_seed + trial
index`` with trials enumerated in canonical cell order.
"""

import numpy as np

STREAM_FILTER = 1
STREAM_INPUTS = 2
STREAM_NOISE = 3
STREAM_INIT = 4
STREAM_SAMPLER = 5

_MASK64 = (1 << 64) - 1


def make_rng(seed, stream=0):
    """Philox generator for (seed, stream). Keys never collide across streams."""
    key = (int(stream) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
