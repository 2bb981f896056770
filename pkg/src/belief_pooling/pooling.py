"""Social-learning dynamics on a star topology.

Each round every agent adapts the server's broadcast belief with its own
observation (a local Bayes step) and the server pools the K intermediate
beliefs by arithmetic (AA) or geometric (GA) averaging.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.special import logsumexp

from belief_pooling.core import (
    Belief,
    ConfidenceWeights,
    HypothesisSet,
    TrajectoryRecord,
    normalize,
    normalize_rows,
)
from belief_pooling.errors import AllZeroBeliefError, TruthAnnihilatedError
from belief_pooling.likelihoods import (
    AgentModel,
    Environment,
    ObservationRound,
    log_likelihood_table,
    sample_rounds,
)

logger = logging.getLogger(__name__)


class PoolingRule(StrEnum):
    AA = "aa"
    GA = "ga"


InitialBelief = Belief | Sequence[Belief]


@dataclass(frozen=True)
class RoundState:
    """The pooled server belief and the intermediate beliefs that produced it."""

    server_belief: Belief
    intermediate: tuple[Belief, ...]


@dataclass(frozen=True)
class DecayBound:
    """The event log mu_t(theta) <= -t * exponent[theta] for all t >= start.

    ``exponents`` has one entry per hypothesis; the true hypothesis entry is
    ignored.
    """

    exponents: np.ndarray
    start: int
    true_index: int

    def holds(self, log_beliefs: np.ndarray, time: int) -> np.ndarray:
        """Whether each row of (..., H) log-beliefs satisfies the bound at ``time``."""
        wrong = np.arange(log_beliefs.shape[-1]) != self.true_index
        limit = -time * np.asarray(self.exponents)[wrong]
        return np.all(log_beliefs[..., wrong] <= limit, axis=-1)


def adapt(prior: Belief, model: AgentModel, x: float) -> Belief:
    """Local Bayes step: psi(theta) ∝ L(x|theta) mu(theta)."""
    return normalize(model.log_likelihoods(x) + prior.log_values)


def fuse_aa(psis: Sequence[Belief], weights: ConfidenceWeights) -> Belief:
    """Weighted arithmetic average of intermediate beliefs."""
    _check_pool(psis, weights)
    stacked = np.stack([b.log_values for b in psis])
    with np.errstate(divide="ignore"):
        mixed = logsumexp(stacked + weights.log_array[:, np.newaxis], axis=0)
    return normalize(mixed)


def fuse_ga(psis: Sequence[Belief], weights: ConfidenceWeights) -> Belief:
    """Normalized weighted geometric average of intermediate beliefs.

    A zero from any agent zeroes the hypothesis in the pooled belief.

    Raises:
        AllZeroBeliefError: If every hypothesis is vetoed by some agent.
    """
    _check_pool(psis, weights)
    stacked = np.stack([b.log_values for b in psis])
    try:
        return normalize(weights.array @ stacked)
    except AllZeroBeliefError:
        raise AllZeroBeliefError("every hypothesis is vetoed by some agent") from None


def fuse(rule: PoolingRule, psis: Sequence[Belief], weights: ConfidenceWeights) -> Belief:
    if rule is PoolingRule.AA:
        return fuse_aa(psis, weights)
    return fuse_ga(psis, weights)


def step(
    env: Environment,
    weights: ConfidenceWeights,
    rule: PoolingRule,
    prior: InitialBelief,
    observation: ObservationRound,
) -> RoundState:
    """One synchronous round: every agent adapts, then the server pools."""
    priors = _per_agent(prior, len(env))
    psis = tuple(
        adapt(p, model, x) for p, model, x in zip(priors, env.agents, observation.values)
    )
    return RoundState(fuse(rule, psis, weights), psis)


def recorded_times(horizon: int, record_every: int) -> np.ndarray:
    """Times 0, r, 2r, ... plus the horizon itself."""
    if horizon < 0:
        raise ValueError(f"Horizon must be non-negative, got {horizon}")
    if record_every < 1:
        raise ValueError(f"record_every must be at least 1, got {record_every}")
    times = np.arange(0, horizon + 1, record_every)
    if times[-1] != horizon:
        times = np.append(times, horizon)
    return times


def initial_log_beliefs(initial: InitialBelief, hypotheses: HypothesisSet) -> np.ndarray:
    """Stack an initial belief spec into shape (H,) or (K, H)."""
    if isinstance(initial, Belief):
        values = initial.log_values
    else:
        values = np.stack([b.log_values for b in initial])
    if values.shape[-1] != hypotheses.count:
        raise ValueError(
            f"Initial belief has {values.shape[-1]} entries, "
            f"expected {hypotheses.count}"
        )
    return values


def propagate(
    rule: PoolingRule,
    weights: ConfidenceWeights,
    hypotheses: HypothesisSet,
    initial: np.ndarray,
    log_likelihoods: np.ndarray,
    record_every: int,
    bound: DecayBound | None = None,
    realizations: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Run the pooling recursion for a batch of realizations.

    Args:
        initial: Shared prior of shape (H,) or per-agent priors of shape (K, H).
        log_likelihoods: Array (B, T, K, H) of log L_k(x_{k,t}|theta).
        bound: Optional decay bound checked at every step from ``bound.start``.
        realizations: Realization indices of the batch rows, used in errors.

    Returns:
        Log-beliefs at the recorded times, shape (B, n_times, H), and, when a
        bound is given, a boolean per realization telling whether it held.

    Raises:
        TruthAnnihilatedError, AllZeroBeliefError: With the offending time and
            realization.
    """
    batch, horizon, agents, count = log_likelihoods.shape
    if len(weights) != agents:
        raise ValueError(f"Expected {agents} confidence weights, got {len(weights)}")
    times = recorded_times(horizon, record_every)
    out = np.empty((batch, times.size, count))
    pi = weights.array
    log_pi = weights.log_array[:, np.newaxis]

    def realization_of(row: int) -> int | None:
        return None if realizations is None else int(realizations[row])

    def normalized(log_values: np.ndarray, time: int) -> np.ndarray:
        dead = ~np.any(np.isfinite(log_values), axis=-1)
        if np.any(dead):
            row = int(np.argmax(dead.reshape(dead.shape[0], -1).any(axis=1)))
            raise AllZeroBeliefError(time=time, realization=realization_of(row))
        return normalize_rows(log_values)

    def pool(log_psi: np.ndarray, time: int) -> np.ndarray:
        if rule is PoolingRule.AA:
            with np.errstate(divide="ignore"):
                pooled = logsumexp(log_psi + log_pi, axis=-2)
        else:
            pooled = np.einsum("k,bkh->bh", pi, log_psi)
        return normalized(pooled, time)

    def check_truth(log_mu: np.ndarray, time: int):
        dead = np.isneginf(log_mu[:, hypotheses.true_index])
        if np.any(dead):
            row = int(np.argmax(dead))
            raise TruthAnnihilatedError(time=time, realization=realization_of(row))

    if initial.ndim == 1:
        prior = np.broadcast_to(initial, (batch, 1, count))
        log_mu = np.broadcast_to(initial, (batch, count))
    else:
        prior = initial[np.newaxis]
        log_mu = np.broadcast_to(pool(prior, 0), (batch, count))
    check_truth(log_mu, 0)
    out[:, 0] = log_mu

    holds = np.ones(batch, dtype=bool) if bound is not None else None
    slot = 1
    for t in range(1, horizon + 1):
        log_psi = normalized(log_likelihoods[:, t - 1] + prior, t)
        log_mu = pool(log_psi, t)
        check_truth(log_mu, t)
        prior = log_mu[:, np.newaxis, :]
        if bound is not None and t >= bound.start:
            holds &= bound.holds(log_mu, t)
        if slot < times.size and times[slot] == t:
            out[:, slot] = log_mu
            slot += 1
    return out, holds


def run_trajectory(
    env: Environment,
    hypotheses: HypothesisSet,
    weights: ConfidenceWeights,
    rule: PoolingRule,
    initial: InitialBelief,
    horizon: int,
    record_every: int,
    rng: np.random.Generator,
    realization_index: int = 0,
    seed: int = 0,
) -> TrajectoryRecord:
    """Simulate one realization and record beliefs every ``record_every`` rounds.

    Observations for the whole horizon are drawn up front from ``rng``, so two
    calls with identically seeded generators see the same data.
    """
    init = initial_log_beliefs(initial, hypotheses)
    observations = sample_rounds(env, hypotheses.true_index, horizon, rng)
    table = log_likelihood_table(env, observations)[np.newaxis]
    table = table.reshape(1, horizon, len(env), hypotheses.count)
    log_beliefs, _ = propagate(
        rule, weights, hypotheses, init, table, record_every,
        realizations=[realization_index],
    )
    return TrajectoryRecord.from_log_beliefs(
        realization_index,
        seed,
        recorded_times(horizon, record_every),
        log_beliefs[0],
        hypotheses,
    )


def run_centralized_bayes(
    env: Environment,
    hypotheses: HypothesisSet,
    initial: Belief,
    horizon: int,
    record_every: int,
    rng: np.random.Generator,
    realization_index: int = 0,
    seed: int = 0,
) -> TrajectoryRecord:
    """Posterior of a fusion center holding every raw observation.

    Treats agents as independent, which is exact only for independent
    environments. Draws observations exactly as ``run_trajectory`` does.
    """
    observations = sample_rounds(env, hypotheses.true_index, horizon, rng)
    table = log_likelihood_table(env, observations).reshape(
        horizon, len(env), hypotheses.count
    )
    cumulative = np.vstack(
        [np.zeros(hypotheses.count), np.cumsum(table.sum(axis=1), axis=0)]
    )
    times = recorded_times(horizon, record_every)
    log_beliefs = normalize_rows(initial.log_values + cumulative[times])
    return TrajectoryRecord.from_log_beliefs(
        realization_index, seed, times, log_beliefs, hypotheses
    )


def _per_agent(prior: InitialBelief, count: int) -> tuple[Belief, ...]:
    if isinstance(prior, Belief):
        return (prior,) * count
    priors = tuple(prior)
    if len(priors) != count:
        raise ValueError(f"Expected {count} per-agent priors, got {len(priors)}")
    return priors


def _check_pool(psis: Sequence[Belief], weights: ConfidenceWeights):
    if len(psis) != len(weights):
        raise ValueError(
            f"Got {len(psis)} beliefs for {len(weights)} confidence weights"
        )
    if len({len(b) for b in psis}) != 1:
        raise ValueError("All pooled beliefs must cover the same hypotheses")
