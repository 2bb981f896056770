"""Asymptotic normality constants and the error-probability approximations built on them.

For a wrong hypothesis theta, the log-belief ratio lambda_i(theta) is
approximately normal with mean rho*i and variance sigma^2*i under both pooling
rules. GA's constants come from per-agent KL divergences; AA's are estimated by
Monte Carlo over the per-round statistic log sum_k pi_k r_k.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from belief_pooling.core import ConfidenceWeights, HypothesisSet, TrajectoryRecord
from belief_pooling.errors import DegenerateVarianceError
from belief_pooling.likelihoods import (
    Environment,
    kl_divergence,
    log_ratio_table,
    sample_rounds,
)
from belief_pooling.pooling import DecayBound, PoolingRule
from belief_pooling.seeding import estimator_rng
from belief_pooling.stats import MomentEstimate, estimate_moments, std_normal_cdf

logger = logging.getLogger(__name__)

MIN_MONTE_CARLO_SAMPLES = 10_000
DEFAULT_MONTE_CARLO_SAMPLES = 1_000_000
BLOCK_SIZE = 100_000
STD_ERROR_BAND = 4.0


class Estimation(StrEnum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


class StatisticForm(StrEnum):
    """Which quantity a normalized statistic is built from."""

    RATIO = "ratio"
    LOG_BELIEF = "log_belief"


@dataclass(frozen=True)
class NormalityParams:
    """Per-round drift ``rho`` and variance ``sigma2`` of a log-belief ratio."""

    rule: PoolingRule
    theta: int
    rho: float
    sigma2: float
    estimation: Estimation = Estimation.ANALYTIC
    samples: int | None = None
    std_error_rho: float = 0.0
    std_error_sigma2: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.rho):
            raise ValueError(f"rho must be finite, got {self.rho}")
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")
        if self.estimation is Estimation.MONTE_CARLO and (
            self.samples is None or self.samples < MIN_MONTE_CARLO_SAMPLES
        ):
            raise ValueError(
                f"Monte Carlo estimates need at least {MIN_MONTE_CARLO_SAMPLES} samples"
            )

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule": str(self.rule),
            "theta": self.theta,
            "rho": self.rho,
            "sigma2": self.sigma2,
            "estimation": str(self.estimation),
            "std_errors": {"rho": self.std_error_rho, "sigma2": self.std_error_sigma2},
            "samples": self.samples,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class JensenGap:
    """GA and AA rates for one hypothesis and whether rho_G >= rho_A holds."""

    theta: int
    rho_ga: float
    rho_aa: float
    std_error: float

    @property
    def gap(self) -> float:
        return self.rho_ga - self.rho_aa

    @property
    def holds(self) -> bool:
        return self.rho_ga >= self.rho_aa - STD_ERROR_BAND * self.std_error

    @property
    def strictly_positive(self) -> bool:
        return self.gap > STD_ERROR_BAND * self.std_error

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta": self.theta,
            "rho_ga": self.rho_ga,
            "rho_aa": self.rho_aa,
            "gap": self.gap,
            "std_error": self.std_error,
            "holds": self.holds,
        }


def _check_wrong(hypotheses: HypothesisSet, theta: int):
    if theta == hypotheses.true_index or not 0 <= theta < hypotheses.count:
        raise ValueError(f"theta must be a wrong hypothesis index, got {theta}")


def _monte_carlo_statistic(
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    theta: int,
    rule: PoolingRule,
    samples: int,
    seed: int,
    threads: int = 1,
) -> MomentEstimate:
    """Moments of the per-round pooled log-likelihood-ratio statistic.

    Samples come in fixed-size blocks, each from its own derived stream, and
    are concatenated in block order, so the estimate does not depend on
    ``threads``.
    """
    if samples < MIN_MONTE_CARLO_SAMPLES:
        raise ValueError(
            f"Monte Carlo estimation needs at least {MIN_MONTE_CARLO_SAMPLES} samples, "
            f"got {samples}"
        )
    sizes = [BLOCK_SIZE] * (samples // BLOCK_SIZE)
    if samples % BLOCK_SIZE:
        sizes.append(samples % BLOCK_SIZE)

    def block(index: int) -> np.ndarray:
        rng = estimator_rng(seed, index)
        observations = sample_rounds(env, hypotheses.true_index, sizes[index], rng)
        log_r = log_ratio_table(env, hypotheses, observations)[..., theta]
        if rule is PoolingRule.AA:
            return logsumexp(log_r + weights.log_array, axis=-1)
        return log_r @ weights.array

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(block, range(len(sizes))))
    return estimate_moments(np.concatenate(parts))


def ga_params(
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    theta: int,
    samples: int = DEFAULT_MONTE_CARLO_SAMPLES,
    seed: int = 0,
) -> NormalityParams:
    """GA constants: rho_G = sum_k pi_k KL_k and sigma_G^2 = Var[sum_k pi_k log r_k].

    rho_G depends only on the marginals, so it is analytic for every
    environment. sigma_G^2 is analytic for all-Gaussian environments
    (pi' D C D pi with C the observation covariance) and estimated by Monte
    Carlo otherwise.
    """
    _check_wrong(hypotheses, theta)
    if len(weights) != len(env):
        raise ValueError(f"Expected {len(env)} confidence weights, got {len(weights)}")
    kls = np.array(
        [kl_divergence(m, hypotheses.true_index, theta) for m in env.agents]
    )
    rho = float(weights.array @ kls)

    if env.is_gaussian:
        slopes = np.array(
            [m.log_ratio_slope(hypotheses.true_index, theta) for m in env.agents]
        )
        scaled = weights.array * slopes
        sigma2 = float(scaled @ env.covariance() @ scaled)
        return NormalityParams(PoolingRule.GA, theta, rho, sigma2)

    moments = _monte_carlo_statistic(
        env, hypotheses, weights, theta, PoolingRule.GA, samples, seed
    )
    return NormalityParams(
        PoolingRule.GA,
        theta,
        rho,
        moments.variance,
        estimation=Estimation.MONTE_CARLO,
        samples=moments.n,
        std_error_sigma2=moments.std_error_variance,
        seed=seed,
    )


def aa_params(
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    theta: int,
    samples: int = DEFAULT_MONTE_CARLO_SAMPLES,
    seed: int = 0,
    threads: int = 1,
) -> NormalityParams:
    """AA constants by Monte Carlo: rho_A = -E[L], sigma_A^2 = Var[L], L = log sum_k pi_k r_k."""
    _check_wrong(hypotheses, theta)
    if len(weights) != len(env):
        raise ValueError(f"Expected {len(env)} confidence weights, got {len(weights)}")
    moments = _monte_carlo_statistic(
        env, hypotheses, weights, theta, PoolingRule.AA, samples, seed, threads
    )
    logger.debug(
        "AA params for theta=%d: rho=%.6g (se %.2g), sigma2=%.6g (se %.2g)",
        theta,
        -moments.mean,
        moments.std_error_mean,
        moments.variance,
        moments.std_error_variance,
    )
    return NormalityParams(
        PoolingRule.AA,
        theta,
        -moments.mean,
        moments.variance,
        estimation=Estimation.MONTE_CARLO,
        samples=moments.n,
        std_error_rho=moments.std_error_mean,
        std_error_sigma2=moments.std_error_variance,
        seed=seed,
    )


def rule_params(
    rule: PoolingRule,
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    samples: int = DEFAULT_MONTE_CARLO_SAMPLES,
    seed: int = 0,
    threads: int = 1,
) -> tuple[NormalityParams, ...]:
    """Constants of one rule for every wrong hypothesis, in index order."""
    if rule is PoolingRule.AA:
        return tuple(
            aa_params(env, hypotheses, weights, theta, samples, seed, threads)
            for theta in hypotheses.wrong
        )
    return tuple(
        ga_params(env, hypotheses, weights, theta, samples, seed)
        for theta in hypotheses.wrong
    )


def normalize_statistic(
    value: ArrayLike,
    params: NormalityParams,
    time: int,
    form: StatisticForm = StatisticForm.RATIO,
) -> np.ndarray | float:
    """Centre and scale a log-belief ratio (or a log-belief) at ``time``.

    RATIO:      (lambda_i - rho i) / (sigma sqrt(i))
    LOG_BELIEF: (log mu_i(theta) + rho i) / (sigma sqrt(i))

    Raises:
        DegenerateVarianceError: If sigma2 is zero.
    """
    if time < 1:
        raise ValueError(f"time must be at least 1, got {time}")
    if params.sigma2 <= 0:
        raise DegenerateVarianceError(
            f"sigma2 is zero for hypothesis {params.theta}; the statistic is undefined"
        )
    value = np.asarray(value, dtype=float)
    scale = params.sigma * np.sqrt(time)
    if form is StatisticForm.RATIO:
        result = (value - params.rho * time) / scale
    else:
        result = (value + params.rho * time) / scale
    return float(result) if result.ndim == 0 else result


def error_prob_approx(params: NormalityParams, time: int) -> float:
    """Gaussian approximation of P(lambda_i(theta) <= 0) = Phi(-sqrt(i) rho / sigma).

    Raises:
        DegenerateVarianceError: If sigma2 is zero.
    """
    if time < 1:
        raise ValueError(f"time must be at least 1, got {time}")
    if params.sigma2 <= 0:
        raise DegenerateVarianceError(
            f"sigma2 is zero for hypothesis {params.theta}; no normal approximation"
        )
    return float(std_normal_cdf(-np.sqrt(time) * params.rho / params.sigma))


def union_error_prob_approx(params: Iterable[NormalityParams], time: int) -> float:
    """Union bound over wrong hypotheses, clamped at one."""
    return min(1.0, sum(error_prob_approx(p, time) for p in params))


def decay_bound(
    params: NormalityParams | Sequence[NormalityParams],
    hypotheses: HypothesisSet,
    epsilon: float | Sequence[float],
    start: int,
) -> DecayBound:
    """The bound mu_i(theta) <= exp(-i (rho - epsilon)) for i >= start.

    A single ``params`` applies its rate to every wrong hypothesis.
    """
    if isinstance(params, NormalityParams):
        params = [params] * len(hypotheses.wrong)
    if np.ndim(epsilon) == 0:
        epsilon = [float(epsilon)] * len(hypotheses.wrong)
    exponents = np.zeros(hypotheses.count)
    for theta, p, eps in zip(hypotheses.wrong, params, epsilon):
        if not 0 < eps <= p.rho:
            raise ValueError(f"epsilon must lie in (0, rho]; got {eps} for rho={p.rho}")
        exponents[theta] = p.rho - eps
    return DecayBound(exponents, start, hypotheses.true_index)


def highprob_bound_diagnostic(
    records: Sequence[TrajectoryRecord],
    params: NormalityParams | Sequence[NormalityParams],
    hypotheses: HypothesisSet,
    epsilon: float | Sequence[float],
    start: int,
) -> float:
    """Fraction of realizations whose wrong-hypothesis beliefs obey the decay bound
    at every recorded time from ``start`` on.

    Raises:
        ValueError: If a record is not recorded at every step from ``start``.
    """
    if not records:
        raise ValueError("Need at least one trajectory record")
    bound = decay_bound(params, hypotheses, epsilon, start)
    satisfied = 0
    for record in records:
        window = record.times >= start
        times = record.times[window]
        if times.size == 0 or times[0] != start or np.any(np.diff(times) != 1):
            raise ValueError(
                f"Realization {record.realization_index} is not recorded at every "
                f"step from {start}"
            )
        logs = record.log_beliefs[window]
        if all(bound.holds(row, int(t)) for row, t in zip(logs, times)):
            satisfied += 1
    return satisfied / len(records)


def jensen_gap(
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    theta: int,
    samples: int = DEFAULT_MONTE_CARLO_SAMPLES,
    seed: int = 0,
    threads: int = 1,
) -> JensenGap:
    """Compare rho_G with a Monte Carlo rho_A."""
    ga = ga_params(env, hypotheses, weights, theta, samples, seed)
    aa = aa_params(env, hypotheses, weights, theta, samples, seed, threads)
    return JensenGap(theta, ga.rho, aa.rho, aa.std_error_rho)
