"""
Seeded random streams.

A stream is a 64-bit seed plus a key path (trial index, outer sweep, inner
step, ...). Generators are derived with numpy's SeedSequence, so the numbers
a step sees depend only on its path, never on thread scheduling.
"""

from dataclasses import dataclass

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_rng(seed, *keys):
    entropy = [int(seed) & SEED_MASK] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class RandomStream:
    seed: int
    path: tuple = ()

    def child(self, *keys):
        return RandomStream(self.seed, self.path + tuple(int(k) for k in keys))

    def spawn(self, count):
        return [self.child(i) for i in range(count)]

    def rng(self):
        return derive_rng(self.seed, *self.path)
