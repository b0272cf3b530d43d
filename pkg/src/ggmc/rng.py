"""Counter-based noise streams, one per chain."""

from __future__ import annotations

import numpy as np


class NoiseStream:
    """Gaussian and uniform draws from a Philox counter-based generator.

    Streams built from the same ``seed`` and ``stream_id`` produce identical
    sequences; different ``stream_id`` values are statistically independent.
    """

    def __init__(self, seed=0, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(seq))

    @classmethod
    def for_chains(cls, seed, n_chains):
        return [cls(seed, i) for i in range(n_chains)]

    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self):
        # open interval (0, 1) so log(u) is finite
        u = self._gen.random()
        while u == 0.0:
            u = self._gen.random()
        return u

    def integers(self, high):
        return int(self._gen.integers(high))

    @property
    def counter(self):
        return int(self._gen.bit_generator.state["state"]["counter"][0])
