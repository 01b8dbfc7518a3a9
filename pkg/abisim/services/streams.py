"""Seeded random streams for reproducible simulations."""

from dataclasses import dataclass
from typing import List

import numpy as np

STREAM_NAMES = ('drift', 'pd', 'spd', 'misc')


@dataclass
class RandomStreams:
    """
    Independent numpy Generators spawned from one root seed

    Each simulated component owns one stream, so adding noise to one detector
    never changes the draws of another.
    """
    seed: int
    drift: np.random.Generator
    pd: np.random.Generator
    spd: np.random.Generator
    misc: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> 'RandomStreams':
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        gens = [np.random.Generator(np.random.PCG64(child)) for child in children]
        return cls(seed, *gens)

    def fork(self, count: int) -> List[int]:
        """Derive child seeds for sub-tasks (sweep points, Monte-Carlo replicas)"""
        children = np.random.SeedSequence([self.seed, 0x5EED]).spawn(count)
        return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def replica_seeds(seed: int, count: int) -> List[int]:
    """Order-independent child seeds: replica k always receives the same seed"""
    return RandomStreams.from_seed(seed).fork(count)
