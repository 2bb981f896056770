"""Monte Carlo orchestration of pooling experiments.

Realizations run in fixed-size batches on a thread pool. Each realization
draws its observations from its own derived stream, and batch boundaries do
not depend on the worker count, so results are identical for any number of
threads.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from belief_pooling.asymptotics import (
    JensenGap,
    NormalityParams,
    decay_bound,
    normalize_statistic,
    rule_params,
    union_error_prob_approx,
)
from belief_pooling.core import TrajectoryRecord, log_belief_ratios
from belief_pooling.errors import (
    ConstantSampleError,
    DegenerateVarianceError,
    MissingRuleError,
    SampleSizeError,
)
from belief_pooling.likelihoods import (
    IdentifiabilityReport,
    log_likelihood_table,
    sample_rounds,
)
from belief_pooling.pooling import (
    DecayBound,
    PoolingRule,
    initial_log_beliefs,
    propagate,
    recorded_times,
)
from belief_pooling.schema import RunConfig
from belief_pooling.seeding import realization_rng, realization_seed
from belief_pooling.stats import (
    SHAPIRO_MAX_SIZE,
    SHAPIRO_MIN_SIZE,
    TestResult,
    ks_test_normal,
    proportion_interval,
    shapiro_wilk,
)

logger = logging.getLogger(__name__)

BATCH_SIZE = 25
SLOPE_TOLERANCE = 0.02


@dataclass(frozen=True)
class NormalityChecks:
    """Normality tests of the normalized statistic for one wrong hypothesis."""

    theta: int
    samples: np.ndarray
    ks: TestResult
    shapiro_wilk: TestResult | None


@dataclass(frozen=True, eq=False)
class RuleReport:
    """Everything measured for one pooling rule."""

    rule: PoolingRule
    params: tuple[NormalityParams, ...]
    times: np.ndarray
    log_beliefs: np.ndarray
    lambdas: np.ndarray
    normality: tuple[NormalityChecks, ...]
    error_counts: np.ndarray
    error_intervals: np.ndarray
    predicted_error: np.ndarray
    bound_fraction: float | None

    @property
    def realizations(self) -> int:
        return self.lambdas.shape[0]

    @property
    def error_rates(self) -> np.ndarray:
        return self.error_counts / self.realizations

    @property
    def lambda_at_horizon(self) -> np.ndarray:
        return self.lambdas[:, -1, :]

    def params_for(self, theta: int) -> NormalityParams:
        for p in self.params:
            if p.theta == theta:
                return p
        raise KeyError(theta)

    def normalized(self, theta: int) -> np.ndarray:
        for check in self.normality:
            if check.theta == theta:
                return check.samples
        raise KeyError(theta)

    def slope_fraction(self, theta: int, tolerance: float = SLOPE_TOLERANCE) -> float:
        """Share of realizations whose lambda_T(theta) / T is within ``tolerance`` of rho."""
        horizon = int(self.times[-1])
        slopes = self.lambda_at_horizon[:, theta] / horizon
        return float(np.mean(np.abs(slopes - self.params_for(theta).rho) <= tolerance))


@dataclass(frozen=True, eq=False)
class AggregateReport:
    """Results of ``run_experiment``."""

    config: RunConfig
    times: np.ndarray
    seeds: np.ndarray
    rules: dict[PoolingRule, RuleReport]
    jensen: tuple[JensenGap, ...] | None
    identifiability: IdentifiabilityReport

    def __getitem__(self, rule: PoolingRule | str) -> RuleReport:
        rule = PoolingRule(rule)
        if rule not in self.rules:
            raise MissingRuleError(f"Report has no results for rule '{rule}'")
        return self.rules[rule]

    def records(self, rule: PoolingRule | str) -> list[TrajectoryRecord]:
        report = self[rule]
        return [
            TrajectoryRecord(
                realization_index=r,
                seed=int(self.seeds[r]),
                times=self.times,
                log_beliefs=report.log_beliefs[r],
                lambdas=report.lambdas[r],
            )
            for r in range(report.realizations)
        ]


@dataclass(frozen=True, eq=False)
class RuleComparison:
    """Side-by-side AA and GA error curves and constants."""

    times: np.ndarray
    aa_rates: np.ndarray
    ga_rates: np.ndarray
    aa_intervals: np.ndarray
    ga_intervals: np.ndarray
    aa_predicted: np.ndarray
    ga_predicted: np.ndarray
    aa_params: tuple[NormalityParams, ...]
    ga_params: tuple[NormalityParams, ...]
    jensen: tuple[JensenGap, ...]

    @property
    def ga_not_worse(self) -> np.ndarray:
        """Per recorded time, whether GA's empirical error is at most AA's."""
        return self.ga_rates <= self.aa_rates

    def to_dict(self) -> dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "aa": {
                "error_rate": self.aa_rates.tolist(),
                "ci": self.aa_intervals.tolist(),
                "predicted": self.aa_predicted.tolist(),
                "params": [p.to_dict() for p in self.aa_params],
            },
            "ga": {
                "error_rate": self.ga_rates.tolist(),
                "ci": self.ga_intervals.tolist(),
                "predicted": self.ga_predicted.tolist(),
                "params": [p.to_dict() for p in self.ga_params],
            },
            "jensen": [j.to_dict() for j in self.jensen],
        }


def default_threads() -> int:
    return os.cpu_count() or 1


def _batches(count: int, size: int = BATCH_SIZE) -> list[range]:
    return [range(start, min(start + size, count)) for start in range(0, count, size)]


def _run_batch(
    config: RunConfig,
    indices: Sequence[int],
    bounds: dict[PoolingRule, DecayBound | None],
) -> dict[PoolingRule, tuple[np.ndarray, np.ndarray | None]]:
    env = config.environment
    hypotheses = config.hypotheses
    tables = []
    for r in indices:
        rng = realization_rng(config.seed, r)
        observations = sample_rounds(env, hypotheses.true_index, config.horizon, rng)
        tables.append(log_likelihood_table(env, observations))
    table = np.stack(tables)
    initial = initial_log_beliefs(config.initial_belief, hypotheses)

    # Both rules see the same observations.
    results = {}
    for rule in config.rules:
        results[rule] = propagate(
            rule,
            config.weights,
            hypotheses,
            initial,
            table,
            config.record_every,
            bound=bounds[rule],
            realizations=indices,
        )
    logger.debug("Finished realizations %d-%d", indices[0], indices[-1])
    return results


def _bound_for(
    config: RunConfig, params: tuple[NormalityParams, ...]
) -> DecayBound | None:
    if any(p.rho <= 0 for p in params):
        logger.warning(
            "Skipping decay-bound diagnostic for %s: non-positive rate", params[0].rule
        )
        return None
    eps = [config.diagnostic.epsilon_fraction * p.rho for p in params]
    start = min(config.diagnostic.start(config.horizon), config.horizon)
    return decay_bound(params, config.hypotheses, eps, start)


def _normality_checks(
    config: RunConfig, params: tuple[NormalityParams, ...], lambdas: np.ndarray
) -> tuple[NormalityChecks, ...]:
    checks = []
    for p in params:
        try:
            samples = normalize_statistic(lambdas[:, -1, p.theta], p, config.horizon)
        except DegenerateVarianceError as e:
            logger.warning("No normalized statistic for %s: %s", p.rule, e)
            continue
        samples = np.atleast_1d(samples)
        sw = None
        if SHAPIRO_MIN_SIZE <= samples.size <= SHAPIRO_MAX_SIZE:
            try:
                sw = shapiro_wilk(samples)
            except (ConstantSampleError, SampleSizeError) as e:
                logger.warning("Shapiro-Wilk skipped for %s: %s", p.rule, e)
        checks.append(NormalityChecks(p.theta, samples, ks_test_normal(samples), sw))
    return tuple(checks)


def _predicted_curve(params: tuple[NormalityParams, ...], times: np.ndarray) -> np.ndarray:
    predicted = np.full(times.size, np.nan)
    for idx, t in enumerate(times):
        if t < 1:
            continue
        try:
            predicted[idx] = union_error_prob_approx(params, int(t))
        except DegenerateVarianceError:
            break
    return predicted


def _rule_report(
    config: RunConfig,
    rule: PoolingRule,
    params: tuple[NormalityParams, ...],
    times: np.ndarray,
    log_beliefs: np.ndarray,
    holds: np.ndarray | None,
) -> RuleReport:
    hypotheses = config.hypotheses
    lambdas = log_belief_ratios(log_beliefs, hypotheses)
    # A tie with a wrong hypothesis counts as an error.
    errors = np.min(lambdas[..., list(hypotheses.wrong)], axis=-1) <= 0
    counts = errors.sum(axis=0)
    intervals = np.array(
        [proportion_interval(int(c), config.realizations) for c in counts]
    )
    return RuleReport(
        rule=rule,
        params=params,
        times=times,
        log_beliefs=log_beliefs,
        lambdas=lambdas,
        normality=_normality_checks(config, params, lambdas),
        error_counts=counts,
        error_intervals=intervals,
        predicted_error=_predicted_curve(params, times),
        bound_fraction=None if holds is None else float(np.mean(holds)),
    )


def run_experiment(config: RunConfig, threads: int | None = None) -> AggregateReport:
    """Run every realization of ``config`` and aggregate the results.

    Raises:
        IdentifiabilityError: Unless identifiability passes or is overridden.
        TruthAnnihilatedError, AllZeroBeliefError: With realization and time.
    """
    threads = threads or default_threads()
    identifiability = config.check_identifiability()
    hypotheses = config.hypotheses

    logger.info("Estimating normality constants for %s", ", ".join(config.rules))
    params = {
        rule: rule_params(
            rule,
            config.environment,
            hypotheses,
            config.weights,
            samples=config.estimator_samples,
            seed=config.seed,
            threads=threads,
        )
        for rule in config.rules
    }
    bounds = {rule: _bound_for(config, params[rule]) for rule in config.rules}

    batches = _batches(config.realizations)
    logger.info(
        "Running %d realizations of horizon %d in %d batches on %d threads",
        config.realizations,
        config.horizon,
        len(batches),
        threads,
    )
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda b: _run_batch(config, b, bounds), batches))

    times = recorded_times(config.horizon, config.record_every)
    rules = {}
    for rule in config.rules:
        log_beliefs = np.concatenate([res[rule][0] for res in results])
        holds = None
        if bounds[rule] is not None:
            holds = np.concatenate([res[rule][1] for res in results])
        rules[rule] = _rule_report(config, rule, params[rule], times, log_beliefs, holds)

    jensen = None
    if PoolingRule.AA in params and PoolingRule.GA in params:
        jensen = tuple(
            JensenGap(ga.theta, ga.rho, aa.rho, aa.std_error_rho)
            for aa, ga in zip(params[PoolingRule.AA], params[PoolingRule.GA])
        )

    seeds = np.array(
        [realization_seed(config.seed, r) for r in range(config.realizations)],
        dtype=np.uint64,
    )
    return AggregateReport(config, times, seeds, rules, jensen, identifiability)


def compare_rules(report: AggregateReport) -> RuleComparison:
    """Put AA and GA results side by side.

    Raises:
        MissingRuleError: If the report lacks either rule.
    """
    aa = report[PoolingRule.AA]
    ga = report[PoolingRule.GA]
    return RuleComparison(
        times=report.times,
        aa_rates=aa.error_rates,
        ga_rates=ga.error_rates,
        aa_intervals=aa.error_intervals,
        ga_intervals=ga.error_intervals,
        aa_predicted=aa.predicted_error,
        ga_predicted=ga.predicted_error,
        aa_params=aa.params,
        ga_params=ga.params,
        jensen=report.jensen or (),
    )
