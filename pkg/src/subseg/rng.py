"""Deterministic random streams.

All stochastic choices (weight init, concept init, epoch shuffles, synthetic
data) draw from Philox, a counter-based 64-bit generator: a (seed, stream)
pair fully determines the sequence, independent of global state, import
order, or how many other streams exist.
"""

import numpy as np

STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_SYNTH = 2


def make_rng(seed: int, stream: int = STREAM_INIT) -> np.random.Generator:
    """Return an independent generator for (seed, stream)."""
    seq = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(seq))
