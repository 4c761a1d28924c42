"""Reproducible random streams.

Every stochastic routine derives its generator from (master seed, stream
index), so replicates are independent of worker count and re-runs are
bit-identical.
"""

from __future__ import annotations

import numpy as np


def stream_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Generator for a named stream under a master seed."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed),) + tuple(int(s) for s in stream)))
