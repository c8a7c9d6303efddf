"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by
``(master_seed, unit_index, stream_id)`` through :class:`numpy.random.SeedSequence`,
so results never depend on how work units are scheduled across workers.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    TREE = 0
    OFFSET = 1
    INITIAL = 2
    PICK = 3
    AUX = 4


def stream(master_seed: int, unit: int, stream_id: int) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(unit), int(stream_id)))
    return np.random.Generator(np.random.Philox(ss))


def streams(master_seed: int, unit: int, *ids: int) -> tuple:
    return tuple(stream(master_seed, unit, i) for i in ids)
