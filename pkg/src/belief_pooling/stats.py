"""Statistical primitives for checking normality claims."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
import scipy.special
import scipy.stats
from numpy.typing import ArrayLike

from belief_pooling.errors import (
    ConstantSampleError,
    NonFiniteSampleError,
    SampleSizeError,
)

logger = logging.getLogger(__name__)

SHAPIRO_MIN_SIZE = 3
SHAPIRO_MAX_SIZE = 5000


class NormalityTest(StrEnum):
    KS = "ks"
    SHAPIRO_WILK = "shapiro_wilk"


@dataclass(frozen=True)
class TestResult:
    """Outcome of a normality test."""

    __test__ = False  # keep pytest from collecting this class

    test: NormalityTest
    statistic: float
    p_value: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value must lie in [0, 1], got {self.p_value}")

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "test": str(self.test),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
        }


def std_normal_cdf(t: ArrayLike) -> np.ndarray | float:
    """Standard normal CDF, accurate in both tails."""
    return scipy.special.ndtr(t)


def _finite_sample(samples: ArrayLike) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise SampleSizeError("Sample must not be empty")
    if not np.all(np.isfinite(x)):
        raise NonFiniteSampleError("Sample contains NaN or infinite values")
    return x


def ks_test_normal(samples: ArrayLike) -> TestResult:
    """One-sample Kolmogorov-Smirnov test against the standard normal.

    The p-value uses the asymptotic Kolmogorov distribution of sqrt(n) D.

    Raises:
        NonFiniteSampleError: If the sample contains NaN or infinities.
        SampleSizeError: If the sample is empty.
    """
    x = _finite_sample(samples)
    result = scipy.stats.kstest(x, "norm", method="asymp")
    statistic = float(result.statistic)
    p_value = float(np.clip(scipy.special.kolmogorov(np.sqrt(x.size) * statistic), 0, 1))
    return TestResult(NormalityTest.KS, statistic, p_value, int(x.size))


def shapiro_wilk(samples: ArrayLike) -> TestResult:
    """Shapiro-Wilk normality test (Royston's approximation, 3 <= n <= 5000).

    Raises:
        SampleSizeError: If n is outside [3, 5000].
        ConstantSampleError: If every value is identical.
        NonFiniteSampleError: If the sample contains NaN or infinities.
    """
    x = _finite_sample(samples)
    if not SHAPIRO_MIN_SIZE <= x.size <= SHAPIRO_MAX_SIZE:
        raise SampleSizeError(
            f"Shapiro-Wilk needs between {SHAPIRO_MIN_SIZE} and "
            f"{SHAPIRO_MAX_SIZE} samples, got {x.size}"
        )
    if np.ptp(x) == 0:
        raise ConstantSampleError("Shapiro-Wilk is undefined for a constant sample")
    result = scipy.stats.shapiro(x)
    return TestResult(
        NormalityTest.SHAPIRO_WILK,
        float(result.statistic),
        float(np.clip(result.pvalue, 0, 1)),
        int(x.size),
    )


def default_bin_count(n: int) -> int:
    """Sturges' rule: ceil(log2 n) + 1."""
    return int(np.ceil(np.log2(max(n, 1)))) + 1


def histogram_density(
    samples: ArrayLike, bin_count: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width density histogram spanning [min, max].

    A sample with a single distinct value yields one bin of width 1 centred on it.

    Returns:
        Bin edges (bin_count + 1) and densities (bin_count).
    """
    x = _finite_sample(samples)
    if bin_count is None:
        bin_count = default_bin_count(x.size)
    if bin_count < 1:
        raise ValueError(f"bin_count must be at least 1, got {bin_count}")
    if np.ptp(x) == 0:
        edges = np.array([x[0] - 0.5, x[0] + 0.5])
        return edges, np.array([1.0])
    densities, edges = np.histogram(x, bins=bin_count, density=True)
    return edges, densities


def sample_moments(samples: ArrayLike) -> tuple[float, float]:
    """Sample mean and unbiased variance.

    Raises:
        SampleSizeError: If fewer than two values are given.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise SampleSizeError(f"Variance needs at least two samples, got {x.size}")
    return float(np.mean(x)), float(np.var(x, ddof=1))


@dataclass(frozen=True)
class MomentEstimate:
    """Mean and variance of a sample together with their standard errors."""

    n: int
    mean: float
    variance: float
    std_error_mean: float
    std_error_variance: float


def estimate_moments(samples: ArrayLike) -> MomentEstimate:
    """Monte Carlo moments with standard errors.

    The variance's standard error uses the fourth central moment:
    sqrt((m4 - s^4) / n).
    """
    x = np.asarray(samples, dtype=float).ravel()
    mean, variance = sample_moments(x)
    m4 = float(scipy.stats.moment(x, moment=4))
    return MomentEstimate(
        n=int(x.size),
        mean=mean,
        variance=variance,
        std_error_mean=float(np.sqrt(variance / x.size)),
        std_error_variance=float(np.sqrt(max(m4 - variance**2, 0.0) / x.size)),
    )


def proportion_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    ci = scipy.stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return float(ci.low), float(ci.high)
