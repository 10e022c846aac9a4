"""Counter-based random number streams.

Every stochastic routine in this package draws from a Generator built
here. Streams are keyed by (master_seed, index) through SeedSequence
spawn keys on top of the Philox counter-based bit generator, so
trajectory i of an ensemble is reproducible independently of how many
trajectories run or in what order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Return the Generator for trajectory `index` under `master_seed`."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))
