"""Seed-derived random generators: stateless, splittable, reproducible.

Every stochastic routine takes an explicit ``np.random.Generator``. Streams
for training steps and sample trajectories are derived from (seed, indices)
so that any step can be replayed without serialized RNG state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["generator", "step_generator", "trajectory_generator"]

_DOMAIN_TRAIN = 1
_DOMAIN_SAMPLE = 2


def generator(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def step_generator(seed: int, step: int) -> np.random.Generator:
    """Generator for one training step, identical on replay from any resume point."""
    return np.random.default_rng(np.random.SeedSequence([_DOMAIN_TRAIN, int(seed), int(step)]))


def trajectory_generator(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one sampled trajectory."""
    return np.random.default_rng(np.random.SeedSequence([_DOMAIN_SAMPLE, int(seed), int(index)]))
