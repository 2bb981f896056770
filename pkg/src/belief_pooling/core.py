"""Hypotheses, beliefs, confidence weights and elementary belief algebra.

Beliefs are stored as log-probabilities. Log-belief ratios grow linearly in
time, so linear-space probabilities underflow long before typical horizons.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from belief_pooling.errors import AllZeroBeliefError, TruthAnnihilatedError

SUM_TOLERANCE = 1e-12
RATIO_TOLERANCE = 1e-9


def format_float(value: float) -> str:
    """Format a float for CSV output with 17 significant digits."""
    if np.isneginf(value):
        return "-inf"
    if np.isposinf(value):
        return "inf"
    return format(float(value), ".17g")


@dataclass(frozen=True)
class HypothesisSet:
    """A finite set of H hypotheses with a designated true index."""

    count: int
    true_index: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"Hypothesis count must be at least 2, got {self.count}")
        if not 0 <= self.true_index < self.count:
            raise ValueError(
                f"True index {self.true_index} is outside [0, {self.count})"
            )
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
            if len(self.labels) != self.count:
                raise ValueError(
                    f"Expected {self.count} labels, got {len(self.labels)}"
                )

    @property
    def wrong(self) -> tuple[int, ...]:
        """Indices of every hypothesis other than the true one."""
        return tuple(t for t in range(self.count) if t != self.true_index)

    def label(self, theta: int) -> str:
        if self.labels is None:
            return str(theta)
        return self.labels[theta]


@dataclass(frozen=True, eq=False)
class Belief:
    """A probability mass function over hypotheses, held in log-space."""

    log_values: np.ndarray

    def __post_init__(self):
        values = np.array(self.log_values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("Belief log values must be a non-empty vector")
        if np.any(np.isnan(values)) or np.any(values == np.inf):
            raise ValueError("Belief log values must lie in [-inf, 0]")
        if not np.any(np.isfinite(values)):
            raise AllZeroBeliefError()
        if not _is_normalized(values):
            raise ValueError(
                "Belief log values must be at most 0 with probabilities summing to 1; "
                "use normalize() for unnormalized log-masses"
            )
        values.setflags(write=False)
        object.__setattr__(self, "log_values", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Belief):
            return NotImplemented
        return np.array_equal(self.log_values, other.log_values)

    def __hash__(self) -> int:
        return hash(self.log_values.tobytes())

    def __len__(self) -> int:
        return self.log_values.size

    @classmethod
    def uniform(cls, count: int) -> Belief:
        return cls(np.full(count, -np.log(count)))

    @classmethod
    def from_probabilities(cls, probabilities: ArrayLike) -> Belief:
        """Build a belief from linear-space masses (zeros allowed)."""
        p = np.asarray(probabilities, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("Probabilities must be finite and non-negative")
        with np.errstate(divide="ignore"):
            return normalize(np.log(p))

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def support(self) -> np.ndarray:
        return np.isfinite(self.log_values)

    def to_json(self) -> list[float]:
        return [float(p) for p in self.probabilities]

    def to_csv_row(self) -> list[str]:
        return [format_float(v) for v in self.log_values]


@dataclass(frozen=True)
class ConfidenceWeights:
    """Positive, unit-sum server weights over K agents."""

    pi: tuple[float, ...]

    def __post_init__(self):
        pi = tuple(float(x) for x in self.pi)
        object.__setattr__(self, "pi", pi)
        if len(pi) < 1:
            raise ValueError("Confidence weights must not be empty")
        if any(not np.isfinite(x) or x <= 0 for x in pi):
            raise ValueError("Every confidence weight must be a positive finite number")
        total = float(np.sum(pi))
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"Confidence weights must sum to 1, got {total!r}")

    @classmethod
    def uniform(cls, count: int) -> ConfidenceWeights:
        return cls(tuple(np.full(count, 1.0 / count)))

    def __len__(self) -> int:
        return len(self.pi)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.pi)

    @property
    def log_array(self) -> np.ndarray:
        return np.log(self.array)

    def permuted(self, order: Sequence[int]) -> ConfidenceWeights:
        return ConfidenceWeights(tuple(self.pi[k] for k in order))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Recorded log-beliefs and log-belief ratios of one realization."""

    realization_index: int
    seed: int
    times: np.ndarray
    log_beliefs: np.ndarray
    lambdas: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        log_beliefs = np.asarray(self.log_beliefs, dtype=float)
        lambdas = np.asarray(self.lambdas, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("Recorded times must be strictly increasing")
        if log_beliefs.shape[0] != times.size or lambdas.shape != log_beliefs.shape:
            raise ValueError("Recorded beliefs and ratios must match the recorded times")
        if not _ratios_match(log_beliefs, lambdas):
            raise ValueError("Recorded ratios do not match the recorded log-beliefs")
        for arr in (times, log_beliefs, lambdas):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "log_beliefs", log_beliefs)
        object.__setattr__(self, "lambdas", lambdas)

    @classmethod
    def from_log_beliefs(
        cls,
        realization_index: int,
        seed: int,
        times: ArrayLike,
        log_beliefs: ArrayLike,
        hypotheses: HypothesisSet,
    ) -> TrajectoryRecord:
        log_beliefs = np.asarray(log_beliefs, dtype=float)
        return cls(
            realization_index=realization_index,
            seed=seed,
            times=np.asarray(times),
            log_beliefs=log_beliefs,
            lambdas=log_belief_ratios(log_beliefs, hypotheses),
        )

    def __len__(self) -> int:
        return self.times.size

    def beliefs(self) -> Iterator[Belief]:
        for row in self.log_beliefs:
            yield Belief(row)

    def at(self, time: int) -> Belief:
        (idx,) = np.flatnonzero(self.times == time)
        return Belief(self.log_beliefs[idx])

    def csv_rows(self) -> Iterator[list[str]]:
        """Rows of time, H log-belief columns, then H ratio columns."""
        for t, logs, lam in zip(self.times, self.log_beliefs, self.lambdas):
            yield [str(int(t))] + [format_float(v) for v in logs] + [
                format_float(v) for v in lam
            ]


def _ratios_match(log_beliefs: np.ndarray, lambdas: np.ndarray) -> bool:
    """lambda + log mu must equal log mu(true) across each row's support."""
    if log_beliefs.size == 0:
        return True
    zero_mass = np.isneginf(log_beliefs)
    if np.any(zero_mass != np.isposinf(lambdas)):
        return False
    with np.errstate(invalid="ignore"):
        truth = np.where(zero_mass, np.nan, lambdas + log_beliefs)
    scale = 1.0 + np.nanmax(np.abs(np.where(zero_mass, np.nan, lambdas)), axis=-1)
    spread = np.nanmax(truth, axis=-1) - np.nanmin(truth, axis=-1)
    return bool(np.all(spread <= RATIO_TOLERANCE * scale))


def normalize(log_values: ArrayLike) -> Belief:
    """Shift log-masses so their probabilities sum to one.

    Entries equal to -inf stay -inf and differences between finite entries are
    preserved.

    Raises:
        AllZeroBeliefError: If every entry is -inf.
    """
    values = np.asarray(log_values, dtype=float)
    if not np.any(np.isfinite(values)):
        raise AllZeroBeliefError()
    if _is_normalized(values):
        return Belief(values)
    return Belief(values - logsumexp(values))


def _is_normalized(values: np.ndarray) -> bool:
    with np.errstate(over="ignore"):
        total = np.sum(np.exp(values))
    return bool(abs(total - 1.0) <= SUM_TOLERANCE and np.all(values <= SUM_TOLERANCE))


def normalize_rows(log_values: np.ndarray) -> np.ndarray:
    """Vectorized ``normalize`` over the last axis.

    Raises:
        AllZeroBeliefError: If any row is entirely -inf.
    """
    if not np.all(np.any(np.isfinite(log_values), axis=-1)):
        raise AllZeroBeliefError()
    return log_values - logsumexp(log_values, axis=-1, keepdims=True)


def log_belief_ratio(belief: Belief, hypotheses: HypothesisSet) -> np.ndarray:
    """Return log mu(true) - log mu(theta) for every theta.

    Hypotheses with zero mass get +inf; the true entry is exactly zero.

    Raises:
        TruthAnnihilatedError: If the true hypothesis has zero mass.
    """
    if len(belief) != hypotheses.count:
        raise ValueError(
            f"Belief has {len(belief)} entries but there are {hypotheses.count} hypotheses"
        )
    return log_belief_ratios(belief.log_values, hypotheses)


def log_belief_ratios(log_beliefs: np.ndarray, hypotheses: HypothesisSet) -> np.ndarray:
    """Vectorized ``log_belief_ratio`` over leading axes."""
    log_beliefs = np.asarray(log_beliefs, dtype=float)
    truth = log_beliefs[..., hypotheses.true_index : hypotheses.true_index + 1]
    if np.any(np.isneginf(truth)):
        raise TruthAnnihilatedError()
    ratios = truth - log_beliefs
    ratios[..., hypotheses.true_index] = 0.0
    return ratios


def map_estimate(belief: Belief) -> int:
    """Index of the most probable hypothesis; ties go to the lowest index."""
    return int(np.argmax(belief.log_values))
