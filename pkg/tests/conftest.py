"""Shared fixtures: the experiment environments used throughout the tests."""

import numpy as np
import pytest

from belief_pooling import (
    ConfidenceWeights,
    Environment,
    ExponentialModel,
    GaussianModel,
    HypothesisSet,
)

PRESET_WEIGHTS = (0.13, 0.2, 0.09, 0.15, 0.08, 0.05, 0.1, 0.05, 0.1, 0.05)


def equicorrelation(k: int, rho: float) -> np.ndarray:
    return rho * np.ones((k, k)) + (1 - rho) * np.eye(k)


@pytest.fixture
def binary() -> HypothesisSet:
    return HypothesisSet(count=2, true_index=0)


@pytest.fixture
def preset_weights() -> ConfidenceWeights:
    return ConfidenceWeights(PRESET_WEIGHTS)


@pytest.fixture
def gaussian_env() -> Environment:
    """Ten unit-variance Gaussian agents, mean 0 under the truth and 1 otherwise."""
    return Environment(tuple(GaussianModel((0.0, 1.0), 1.0) for _ in range(10)))


@pytest.fixture
def correlated_env() -> Environment:
    return Environment(
        tuple(GaussianModel((0.0, 1.0), 1.0) for _ in range(10)),
        equicorrelation(10, 0.95),
    )


@pytest.fixture
def exponential_env() -> Environment:
    return Environment(tuple(ExponentialModel((1.0, 0.5)) for _ in range(10)))
