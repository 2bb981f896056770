"""Per-agent likelihood families, joint sampling and identifiability checks."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
import scipy.stats
from numpy.typing import ArrayLike

from belief_pooling.core import HypothesisSet
from belief_pooling.errors import OutOfSupportError

logger = logging.getLogger(__name__)

IDENTIFIABILITY_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12
ROW_SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class GaussianModel:
    """Scalar Gaussian likelihoods with per-hypothesis means and a shared std."""

    means: tuple[float, ...]
    std: float

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.means) < 2:
            raise ValueError("Gaussian model needs a mean for at least two hypotheses")
        if not all(np.isfinite(self.means)):
            raise ValueError("Gaussian means must be finite")
        if not np.isfinite(self.std) or self.std <= 0:
            raise ValueError(f"Gaussian std must be positive, got {self.std}")

    @property
    def hypothesis_count(self) -> int:
        return len(self.means)

    def distribution(self, theta: int | None = None):
        """Frozen scipy distribution for one hypothesis, or all of them."""
        loc = np.asarray(self.means) if theta is None else self.means[theta]
        return scipy.stats.norm(loc=loc, scale=self.std)

    def log_likelihoods(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.distribution().logpdf(x[..., np.newaxis])

    def sample(self, theta: int, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.distribution(theta).rvs(size=size, random_state=rng)

    def kl(self, theta_from: int, theta_to: int) -> float:
        gap = self.means[theta_from] - self.means[theta_to]
        return gap**2 / (2 * self.std**2)

    def log_ratio_slope(self, true_index: int, theta: int) -> float:
        """Coefficient of x in log L(x|theta) - log L(x|true)."""
        return (self.means[theta] - self.means[true_index]) / self.std**2

    def to_dict(self) -> dict[str, Any]:
        return {"type": "gaussian", "means": list(self.means), "std": self.std}


@dataclass(frozen=True)
class ExponentialModel:
    """Exponential likelihoods parameterized by their per-hypothesis means."""

    means: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.means) < 2:
            raise ValueError(
                "Exponential model needs a mean for at least two hypotheses"
            )
        if any(not np.isfinite(m) or m <= 0 for m in self.means):
            raise ValueError("Exponential means must be positive")

    @property
    def hypothesis_count(self) -> int:
        return len(self.means)

    def distribution(self, theta: int | None = None):
        scale = np.asarray(self.means) if theta is None else self.means[theta]
        return scipy.stats.expon(scale=scale)

    def log_likelihoods(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise OutOfSupportError("Exponential observations must be non-negative")
        return self.distribution().logpdf(x[..., np.newaxis])

    def sample(self, theta: int, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.distribution(theta).rvs(size=size, random_state=rng)

    def kl(self, theta_from: int, theta_to: int) -> float:
        a = 1.0 / self.means[theta_from]
        b = 1.0 / self.means[theta_to]
        return float(np.log(a / b) + b / a - 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "exponential", "means": list(self.means)}


@dataclass(frozen=True)
class CategoricalModel:
    """Categorical likelihoods: one strictly positive probability row per hypothesis."""

    probabilities: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(p) for p in row) for row in self.probabilities)
        object.__setattr__(self, "probabilities", rows)
        if len(rows) < 2:
            raise ValueError(
                "Categorical model needs a row for at least two hypotheses"
            )
        width = len(rows[0])
        if width < 1 or any(len(row) != width for row in rows):
            raise ValueError("Categorical rows must share one non-empty alphabet")
        for theta, row in enumerate(rows):
            if any(not np.isfinite(p) or p <= 0 for p in row):
                raise ValueError(
                    f"Categorical row {theta} must be strictly positive "
                    "(all hypotheses share one support)"
                )
            if abs(sum(row) - 1.0) > ROW_SUM_TOLERANCE:
                raise ValueError(f"Categorical row {theta} must sum to 1")

    @property
    def hypothesis_count(self) -> int:
        return len(self.probabilities)

    @property
    def alphabet_size(self) -> int:
        return len(self.probabilities[0])

    @property
    def _log_table(self) -> np.ndarray:
        # (alphabet, H) so that indexing by symbol yields a hypothesis vector
        return np.log(np.asarray(self.probabilities)).T

    def log_likelihoods(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x)
        symbols = x.astype(np.intp)
        if np.any(symbols != x) or np.any(symbols < 0) or np.any(
            symbols >= self.alphabet_size
        ):
            raise OutOfSupportError(
                f"Categorical symbols must be integers in [0, {self.alphabet_size})"
            )
        return self._log_table[symbols]

    def sample(self, theta: int, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.alphabet_size, size=size, p=self.probabilities[theta])

    def kl(self, theta_from: int, theta_to: int) -> float:
        return float(
            scipy.stats.entropy(
                self.probabilities[theta_from], self.probabilities[theta_to]
            )
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "categorical",
            "probabilities": [list(row) for row in self.probabilities],
        }


AgentModel = GaussianModel | ExponentialModel | CategoricalModel


@dataclass(frozen=True, eq=False)
class Environment:
    """The joint data-generating process of K agents.

    ``correlation`` is None for independent agents, otherwise a K x K
    correlation matrix coupling all-Gaussian agents.
    """

    agents: tuple[AgentModel, ...]
    correlation: np.ndarray | None = None
    cholesky_factor: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        if len(agents) < 1:
            raise ValueError("An environment needs at least one agent")
        counts = {m.hypothesis_count for m in agents}
        if len(counts) != 1:
            raise ValueError("All agents must model the same number of hypotheses")

        if self.correlation is None:
            return

        corr = np.array(self.correlation, dtype=float)
        k = len(agents)
        if corr.shape != (k, k):
            raise ValueError(f"Correlation matrix must be {k}x{k}, got {corr.shape}")
        if not all(isinstance(m, GaussianModel) for m in agents):
            raise ValueError("A correlation matrix requires every agent to be Gaussian")
        if np.max(np.abs(corr - corr.T)) > SYMMETRY_TOLERANCE:
            raise ValueError("Correlation matrix must be symmetric")
        if np.any(np.abs(np.diag(corr) - 1.0) > SYMMETRY_TOLERANCE):
            raise ValueError("Correlation matrix must have a unit diagonal")
        try:
            lower = scipy.linalg.cholesky(corr, lower=True)
        except np.linalg.LinAlgError as e:
            raise ValueError("Correlation matrix must be positive-definite") from e
        corr.setflags(write=False)
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "cholesky_factor", lower)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        if self.agents != other.agents:
            return False
        if self.correlation is None or other.correlation is None:
            return self.correlation is None and other.correlation is None
        return np.array_equal(self.correlation, other.correlation)

    def __hash__(self) -> int:
        return hash(self.agents)

    def __len__(self) -> int:
        return len(self.agents)

    @property
    def hypothesis_count(self) -> int:
        return self.agents[0].hypothesis_count

    @property
    def is_gaussian(self) -> bool:
        return all(isinstance(m, GaussianModel) for m in self.agents)

    def permuted(self, order: Sequence[int]) -> Environment:
        corr = None
        if self.correlation is not None:
            corr = self.correlation[np.ix_(order, order)]
        return Environment(tuple(self.agents[k] for k in order), corr)

    def covariance(self) -> np.ndarray:
        """Observation covariance of an all-Gaussian environment."""
        stds = np.array([m.std for m in self.agents])
        corr = np.eye(len(self)) if self.correlation is None else self.correlation
        return corr * np.outer(stds, stds)


@dataclass(frozen=True)
class ObservationRound:
    """One observation per agent at a single time instant."""

    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class IdentifiabilityEntry:
    theta: int
    max_kl: float
    clear_sighted: tuple[int, ...]

    @property
    def identifiable(self) -> bool:
        return self.max_kl > IDENTIFIABILITY_TOLERANCE


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Per wrong hypothesis, the best agent's KL and which agents can see it."""

    entries: tuple[IdentifiabilityEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.identifiable for e in self.entries)

    @property
    def undistinguished(self) -> tuple[int, ...]:
        return tuple(e.theta for e in self.entries if not e.identifiable)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "hypotheses": [
                {
                    "theta": e.theta,
                    "max_kl": e.max_kl,
                    "identifiable": e.identifiable,
                    "clear_sighted_agents": list(e.clear_sighted),
                }
                for e in self.entries
            ],
        }


def model_from_dict(spec: dict[str, Any]) -> AgentModel:
    """Build an agent model from its config mapping.

    Raises:
        ValueError: If the type is unknown or parameters are missing or invalid.
    """
    if not isinstance(spec, dict):
        raise ValueError("Agent model must be a mapping")
    kind = spec.get("type")
    expected = {
        "gaussian": {"type", "means", "std"},
        "exponential": {"type", "means"},
        "categorical": {"type", "probabilities"},
    }
    if kind not in expected:
        raise ValueError(
            f"Unknown model type {kind!r}. "
            "Must be 'gaussian', 'exponential' or 'categorical'."
        )
    missing = expected[kind] - spec.keys()
    if missing:
        raise ValueError(f"'{kind}' model missing {', '.join(sorted(missing))}")
    extra = spec.keys() - expected[kind]
    if extra:
        raise ValueError(f"'{kind}' model has unknown keys {', '.join(sorted(extra))}")

    if kind == "gaussian":
        return GaussianModel(means=tuple(spec["means"]), std=float(spec["std"]))
    if kind == "exponential":
        return ExponentialModel(means=tuple(spec["means"]))
    return CategoricalModel(
        probabilities=tuple(tuple(row) for row in spec["probabilities"])
    )


def log_likelihood(model: AgentModel, x: float, theta: int) -> float:
    """log L(x | theta) for a single observation.

    Raises:
        OutOfSupportError: If x lies outside the model's support.
    """
    if not 0 <= theta < model.hypothesis_count:
        raise IndexError(f"Hypothesis {theta} out of range")
    return float(model.log_likelihoods(x)[theta])


def log_likelihood_ratios(
    model: AgentModel, x: ArrayLike, hypotheses: HypothesisSet
) -> np.ndarray:
    """log L(x|theta) - log L(x|true) for every theta, over any leading shape."""
    logs = model.log_likelihoods(x)
    ratios = logs - logs[..., hypotheses.true_index : hypotheses.true_index + 1]
    ratios[..., hypotheses.true_index] = 0.0
    return ratios


def kl_divergence(model: AgentModel, theta_from: int, theta_to: int) -> float:
    """Closed-form D_KL(L(.|theta_from) || L(.|theta_to))."""
    if theta_from == theta_to:
        return 0.0
    return max(model.kl(theta_from, theta_to), 0.0)


def sample_rounds(
    env: Environment, true_index: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` i.i.d. rounds under the true hypothesis.

    Returns:
        Array of shape (count, K); categorical symbols are stored as floats.
    """
    if env.cholesky_factor is None:
        columns = [m.sample(true_index, count, rng) for m in env.agents]
        return np.column_stack(columns).astype(float).reshape(count, len(env))

    means = np.array([m.means[true_index] for m in env.agents])
    stds = np.array([m.std for m in env.agents])
    z = rng.standard_normal((count, len(env))) @ env.cholesky_factor.T
    return means + stds * z


def sample_round(
    env: Environment, true_index: int, rng: np.random.Generator
) -> ObservationRound:
    return ObservationRound(tuple(sample_rounds(env, true_index, 1, rng)[0]))


def log_likelihood_table(env: Environment, observations: np.ndarray) -> np.ndarray:
    """Per-agent log-likelihoods for a block of rounds.

    Args:
        observations: Array of shape (..., K).

    Returns:
        Array of shape (..., K, H).
    """
    observations = np.asarray(observations)
    return np.stack(
        [m.log_likelihoods(observations[..., k]) for k, m in enumerate(env.agents)],
        axis=-2,
    )


def log_ratio_table(
    env: Environment, hypotheses: HypothesisSet, observations: np.ndarray
) -> np.ndarray:
    """Per-agent log-likelihood ratios against the truth, shape (..., K, H)."""
    logs = log_likelihood_table(env, observations)
    t = hypotheses.true_index
    return logs - logs[..., t : t + 1]


def check_global_identifiability(
    env: Environment, hypotheses: HypothesisSet
) -> IdentifiabilityReport:
    """Report, per wrong hypothesis, whether some agent separates it from the truth."""
    entries = []
    for theta in hypotheses.wrong:
        kls = [kl_divergence(m, hypotheses.true_index, theta) for m in env.agents]
        clear = tuple(k for k, d in enumerate(kls) if d > IDENTIFIABILITY_TOLERANCE)
        entries.append(IdentifiabilityEntry(theta, float(max(kls)), clear))
    report = IdentifiabilityReport(tuple(entries))
    if not report.passed:
        logger.warning(
            "No clear-sighted agent for hypotheses %s", report.undistinguished
        )
    return report
