"""Deterministic seed derivation.

Every random quantity is drawn from a Generator keyed by
``(master_seed, replica, stream, ...)`` through numpy's SeedSequence, whose
hashing is stable across numpy versions. Results therefore depend only on
the replica index, never on how replicas are scheduled.
"""

from __future__ import annotations

import numpy as np

TREE = 0
WALK = 1
PROCESS = 2
EXIT_WALK = 0
PATH_WALK = 1


def seed_sequence(master: int, replica: int, *stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(replica), *map(int, stream)))


def generator(master: int, replica: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master, replica, *stream)))
