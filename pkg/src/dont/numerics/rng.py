"""Deterministic random streams built on the counter-based Philox generator.

Every consumer of randomness in the package takes an `Rng` rather than a
bare seed, so independent components (data generation, init, shuffling,
permutation tests) draw from provably disjoint streams. A stream is keyed
by ``SeedSequence(entropy=seed, spawn_key=(stream, ...))``, which makes
(seed, stream) -> bits a pure function independent of call order.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """A named Philox stream derived from (seed, stream key)."""

    def __init__(self, seed: int, stream: int = 0, _key=()):
        self.seed = int(seed)
        self.key = tuple(_key) + (int(stream),)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def derive(self, index: int) -> "Rng":
        """Child stream at `index`; children of distinct indices never overlap."""
        return Rng(self.seed, index, _key=self.key)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc=loc, scale=scale, size=size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low=low, high=high, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high=high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"
