"""
Deterministic seed schedule

Every random stream is derived from the root seed through
numpy.random.SeedSequence(root, spawn_key=(patient, segment, purpose, *replicate)),
so any stream can be rebuilt independently of execution order.
"""
import zlib
from enum import IntEnum
from typing import Union

import numpy as np


class Purpose(IntEnum):
    GA_INIT = 1
    GA_EVALUATE = 2
    GA_GENERATION = 3
    ABC = 4
    REDUCTION = 5
    KS_SUBSAMPLE = 6
    KDE_SUBSAMPLE = 7
    SYNTH = 8


def patient_key(patient_id: Union[str, int]) -> int:
    """Stable integer key for a patient id"""
    if isinstance(patient_id, int):
        return patient_id
    return zlib.crc32(patient_id.encode("utf-8"))


class SeedSchedule:
    """Counter-based seed derivation rooted at one integer seed"""

    def __init__(self, root_seed: int):
        if root_seed < 0:
            raise ValueError(f"Root seed must be >= 0, got {root_seed}")
        self.root_seed = int(root_seed)

    def sequence(self, patient_id, segment: int, purpose: Purpose, *replicate: int) -> np.random.SeedSequence:
        key = (patient_key(patient_id), int(segment), int(purpose)) + tuple(int(r) for r in replicate)
        return np.random.SeedSequence(self.root_seed, spawn_key=key)

    def rng(self, patient_id, segment: int, purpose: Purpose, *replicate: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(patient_id, segment, purpose, *replicate))


def child_sequences(parent: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """Derive a sub-stream of an existing sequence"""
    return np.random.SeedSequence(
        parent.entropy, spawn_key=tuple(parent.spawn_key) + tuple(int(k) for k in key)
    )
