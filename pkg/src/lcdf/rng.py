"""Seeded, splittable random streams.

Stream ``i`` of master seed ``s`` is the PCG64 generator built from
``SeedSequence(entropy=s, spawn_key=(i,))``. Work is always partitioned into
tasks that each own one stream, so results never depend on how tasks are
scheduled across threads.
"""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for task ``key`` (one or more non-negative ints) of ``seed``."""
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed, 0)
