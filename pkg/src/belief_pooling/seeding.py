"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by a master seed and
a spawn key, so a stream depends only on what it is for, never on the order in
which workers happen to request it.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class StreamRole(IntEnum):
    """What a derived stream is used for."""

    OBSERVATIONS = 0
    ESTIMATOR = 1


def derive_seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    if master_seed < 0:
        raise ValueError(f"Master seed must be non-negative, got {master_seed}")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``key`` under ``master_seed``."""
    return np.random.Generator(np.random.Philox(derive_seed_sequence(master_seed, *key)))


def realization_rng(master_seed: int, realization: int) -> np.random.Generator:
    return derive_rng(master_seed, StreamRole.OBSERVATIONS, realization)


def realization_seed(master_seed: int, realization: int) -> int:
    """A 64-bit provenance tag for a realization's observation stream."""
    state = derive_seed_sequence(master_seed, StreamRole.OBSERVATIONS, realization)
    return int(state.generate_state(1, dtype=np.uint64)[0])


def estimator_rng(master_seed: int, block: int) -> np.random.Generator:
    return derive_rng(master_seed, StreamRole.ESTIMATOR, block)
