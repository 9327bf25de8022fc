"""Counter-based random streams keyed by (seed, purpose, ...).

Every random draw in training is taken from a Philox generator whose key is
derived from the run seed plus a tuple of integers naming what the draws are
for (shuffling, a particular minibatch, child-neuron noise, ...).  The same
key always reproduces the same sequence no matter which code path or in what
order the streams are requested.
"""
from __future__ import annotations

import numpy as np

# purpose tags
INIT = 0
SHUFFLE = 1
CD = 2
GENERATE = 3
HEAD = 4
DATA = 5
SAMPLER = 6


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and the substream ``stream``."""
    if seed < 0 or any(k < 0 for k in stream):
        raise ValueError("seed and stream keys must be non-negative integers")
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.Philox(seq))
