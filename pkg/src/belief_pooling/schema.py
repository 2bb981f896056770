"""Run configuration schema, parsing and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import StrEnum
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from belief_pooling.core import Belief, ConfidenceWeights, HypothesisSet
from belief_pooling.errors import ConfigError, ConfigParseError, IdentifiabilityError
from belief_pooling.likelihoods import (
    Environment,
    check_global_identifiability,
    model_from_dict,
)
from belief_pooling.pooling import PoolingRule

DEFAULT_ESTIMATOR_SAMPLES = 1_000_000
MIN_ESTIMATOR_SAMPLES = 10_000

KNOWN_KEYS = frozenset(
    {
        "hypotheses",
        "agents",
        "correlation",
        "weights",
        "rules",
        "horizon",
        "realizations",
        "seed",
        "record_every",
        "initial_belief",
        "output_dir",
        "estimator_samples",
        "allow_unidentifiable",
        "write_trajectories",
        "trajectory_layout",
        "histogram_bins",
        "diagnostic",
    }
)
REQUIRED_KEYS = ("hypotheses", "agents", "weights", "horizon", "realizations")


class TrajectoryLayout(StrEnum):
    PER_REALIZATION = "per_realization"
    LONG = "long"


@dataclass(frozen=True)
class DiagnosticSettings:
    """Where the decay-bound diagnostic looks.

    epsilon is ``epsilon_fraction * rho``; checking starts at
    ``start_fraction * horizon``.
    """

    epsilon_fraction: float = 0.5
    start_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.epsilon_fraction <= 1:
            raise ConfigError(
                "diagnostic.epsilon_fraction", "must lie in (0, 1]"
            )
        if not 0 <= self.start_fraction < 1:
            raise ConfigError("diagnostic.start_fraction", "must lie in [0, 1)")

    def start(self, horizon: int) -> int:
        return max(1, int(round(self.start_fraction * horizon)))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one Monte Carlo experiment."""

    environment: Environment
    hypotheses: HypothesisSet
    weights: ConfidenceWeights
    horizon: int
    realizations: int
    rules: tuple[PoolingRule, ...] = (PoolingRule.AA, PoolingRule.GA)
    seed: int = 1
    record_every: int | None = None
    initial_belief: Belief | tuple[Belief, ...] | None = None
    output_dir: Path = Path("results")
    estimator_samples: int = DEFAULT_ESTIMATOR_SAMPLES
    allow_unidentifiable: bool = False
    write_trajectories: bool = False
    trajectory_layout: TrajectoryLayout = TrajectoryLayout.PER_REALIZATION
    histogram_bins: int | None = None
    diagnostic: DiagnosticSettings = field(default_factory=DiagnosticSettings)
    record_every_defaulted: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        k = len(self.environment)
        h = self.hypotheses.count
        if len(self.weights) != k:
            raise ConfigError(
                "weights", f"expected {k} entries (one per agent), got {len(self.weights)}"
            )
        if self.environment.hypothesis_count != h:
            raise ConfigError(
                "agents",
                f"models cover {self.environment.hypothesis_count} hypotheses, "
                f"expected {h}",
            )
        if self.horizon < 1:
            raise ConfigError("horizon", "must be at least 1")
        if self.realizations < 1:
            raise ConfigError("realizations", "must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if not self.rules or len(set(self.rules)) != len(self.rules):
            raise ConfigError("rules", "must list 'aa' and/or 'ga' without repeats")
        object.__setattr__(self, "rules", tuple(PoolingRule(r) for r in self.rules))
        if self.record_every is None:
            object.__setattr__(self, "record_every", max(1, self.horizon // 100))
            object.__setattr__(self, "record_every_defaulted", True)
        if self.record_every < 1:
            raise ConfigError("record_every", "must be at least 1")
        if self.initial_belief is None:
            object.__setattr__(self, "initial_belief", Belief.uniform(h))
        priors = (
            (self.initial_belief,)
            if isinstance(self.initial_belief, Belief)
            else self.initial_belief
        )
        if not isinstance(self.initial_belief, Belief) and len(priors) != k:
            raise ConfigError(
                "initial_belief.per_agent", f"expected {k} priors, got {len(priors)}"
            )
        if any(len(b) != h for b in priors):
            raise ConfigError("initial_belief", f"every prior needs {h} entries")
        if self.estimator_samples < MIN_ESTIMATOR_SAMPLES:
            raise ConfigError(
                "estimator_samples", f"must be at least {MIN_ESTIMATOR_SAMPLES}"
            )
        if self.histogram_bins is not None and self.histogram_bins < 1:
            raise ConfigError("histogram_bins", "must be at least 1")
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(
            self, "trajectory_layout", TrajectoryLayout(self.trajectory_layout)
        )

    @property
    def per_agent_priors(self) -> bool:
        return not isinstance(self.initial_belief, Belief)

    def with_overrides(self, **overrides: Any) -> RunConfig:
        """Copy with the non-None overrides applied and revalidated.

        A defaulted ``record_every`` follows an overridden horizon.
        """
        changes = {k: v for k, v in overrides.items() if v is not None}
        if (
            self.record_every_defaulted
            and "horizon" in changes
            and "record_every" not in changes
        ):
            changes["record_every"] = None
        return replace(self, **changes) if changes else self

    def check_identifiability(self):
        """Raise unless every wrong hypothesis has a clear-sighted agent (or the override is set).

        Raises:
            IdentifiabilityError: Listing every undistinguished hypothesis.
        """
        report = check_global_identifiability(self.environment, self.hypotheses)
        if not report.passed and not self.allow_unidentifiable:
            raise IdentifiabilityError(report)
        return report


def _require(data: dict[str, Any], key: str, kind: type | tuple[type, ...]) -> Any:
    value = data[key]
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(key, f"must be {_kind_name(kind)}, got a boolean")
    if not isinstance(value, kind):
        raise ConfigError(key, f"must be {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _kind_name(kind: type | tuple[type, ...]) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _parse_hypotheses(spec: Any) -> HypothesisSet:
    if not isinstance(spec, dict):
        raise ConfigError("hypotheses", "must be a mapping with 'count' and 'true_index'")
    unknown = spec.keys() - {"count", "true_index", "labels"}
    if unknown:
        raise ConfigError("hypotheses", f"unknown keys {', '.join(sorted(unknown))}")
    try:
        labels = spec.get("labels")
        return HypothesisSet(
            count=int(spec["count"]),
            true_index=int(spec.get("true_index", 0)),
            labels=tuple(labels) if labels is not None else None,
        )
    except KeyError as e:
        raise ConfigError("hypotheses", f"missing {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError("hypotheses", str(e)) from e


def _parse_environment(data: dict[str, Any]) -> Environment:
    agents_spec = data["agents"]
    if not isinstance(agents_spec, list) or not agents_spec:
        raise ConfigError("agents", "must be a non-empty list of model mappings")
    models = []
    for k, spec in enumerate(agents_spec):
        try:
            models.append(model_from_dict(spec))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"agents[{k}]", str(e)) from e

    correlation = data.get("correlation", "independent")
    if correlation == "independent" or correlation is None:
        matrix = None
    elif isinstance(correlation, list):
        try:
            matrix = np.array(correlation, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError("correlation", "must be a numeric K x K matrix") from e
    else:
        raise ConfigError("correlation", "must be 'independent' or a K x K matrix")
    try:
        return Environment(tuple(models), matrix)
    except ValueError as e:
        field_name = "correlation" if matrix is not None else "agents"
        raise ConfigError(field_name, str(e)) from e


def _parse_weights(spec: Any) -> ConfidenceWeights:
    if not isinstance(spec, list):
        raise ConfigError("weights", "must be a list of positive numbers")
    try:
        return ConfidenceWeights(tuple(float(x) for x in spec))
    except (TypeError, ValueError) as e:
        raise ConfigError("weights", str(e)) from e


def _parse_probabilities(spec: Any, field_name: str) -> Belief:
    if not isinstance(spec, list):
        raise ConfigError(field_name, "must be a list of probabilities")
    try:
        p = np.asarray(spec, dtype=float)
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        return Belief.from_probabilities(p)
    except (TypeError, ValueError) as e:
        raise ConfigError(field_name, str(e)) from e


def _parse_initial_belief(spec: Any) -> Belief | tuple[Belief, ...] | None:
    if spec is None or spec == "uniform":
        return None
    if isinstance(spec, list):
        return _parse_probabilities(spec, "initial_belief")
    if isinstance(spec, dict) and set(spec) == {"per_agent"}:
        rows = spec["per_agent"]
        if not isinstance(rows, list):
            raise ConfigError("initial_belief.per_agent", "must be a list of priors")
        return tuple(
            _parse_probabilities(row, f"initial_belief.per_agent[{k}]")
            for k, row in enumerate(rows)
        )
    raise ConfigError(
        "initial_belief", "must be 'uniform', a probability list, or {per_agent: [...]}"
    )


def _parse_rules(spec: Any) -> tuple[PoolingRule, ...]:
    if isinstance(spec, str):
        spec = ["aa", "ga"] if spec == "both" else [spec]
    if not isinstance(spec, list):
        raise ConfigError("rules", "must be a list of 'aa'/'ga' or 'both'")
    try:
        return tuple(PoolingRule(str(r).lower()) for r in spec)
    except ValueError as e:
        raise ConfigError("rules", str(e)) from e


def _parse_diagnostic(spec: Any) -> DiagnosticSettings:
    if spec is None:
        return DiagnosticSettings()
    if not isinstance(spec, dict):
        raise ConfigError("diagnostic", "must be a mapping")
    unknown = spec.keys() - {"epsilon_fraction", "start_fraction"}
    if unknown:
        raise ConfigError("diagnostic", f"unknown keys {', '.join(sorted(unknown))}")
    values = {}
    for key, value in spec.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"diagnostic.{key}", f"must be a number, got {value!r}")
        values[key] = float(value)
    return DiagnosticSettings(**values)


def config_from_dict(data: Any) -> RunConfig:
    """Validate a config mapping and fill in defaults.

    Raises:
        ConfigError: Naming the offending field and constraint.
    """
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = data.keys() - KNOWN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(key, "is required")

    kwargs: dict[str, Any] = {
        "hypotheses": _parse_hypotheses(data["hypotheses"]),
        "environment": _parse_environment(data),
        "weights": _parse_weights(data["weights"]),
        "horizon": _require(data, "horizon", int),
        "realizations": _require(data, "realizations", int),
        "initial_belief": _parse_initial_belief(data.get("initial_belief")),
        "diagnostic": _parse_diagnostic(data.get("diagnostic")),
    }
    if "rules" in data:
        kwargs["rules"] = _parse_rules(data["rules"])
    for key, kind in (
        ("seed", int),
        ("record_every", int),
        ("estimator_samples", int),
        ("allow_unidentifiable", bool),
        ("write_trajectories", bool),
        ("output_dir", str),
    ):
        if data.get(key) is not None:
            kwargs[key] = _require(data, key, kind)
    if data.get("histogram_bins") is not None:
        kwargs["histogram_bins"] = _require(data, "histogram_bins", int)
    if "trajectory_layout" in data:
        try:
            kwargs["trajectory_layout"] = TrajectoryLayout(data["trajectory_layout"])
        except ValueError as e:
            raise ConfigError("trajectory_layout", str(e)) from e
    return RunConfig(**kwargs)


def _belief_to_list(belief: Belief) -> list[float]:
    return belief.to_json()


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    """Inverse of ``config_from_dict``."""
    hypotheses: dict[str, Any] = {
        "count": config.hypotheses.count,
        "true_index": config.hypotheses.true_index,
    }
    if config.hypotheses.labels is not None:
        hypotheses["labels"] = list(config.hypotheses.labels)

    if config.per_agent_priors:
        initial: Any = {"per_agent": [_belief_to_list(b) for b in config.initial_belief]}
    elif config.initial_belief == Belief.uniform(config.hypotheses.count):
        initial = "uniform"
    else:
        initial = _belief_to_list(config.initial_belief)

    correlation = config.environment.correlation
    return {
        "hypotheses": hypotheses,
        "agents": [m.to_dict() for m in config.environment.agents],
        "correlation": "independent" if correlation is None else correlation.tolist(),
        "weights": list(config.weights.pi),
        "rules": [str(r) for r in config.rules],
        "horizon": config.horizon,
        "realizations": config.realizations,
        "seed": config.seed,
        "record_every": None if config.record_every_defaulted else config.record_every,
        "initial_belief": initial,
        "output_dir": str(config.output_dir),
        "estimator_samples": config.estimator_samples,
        "allow_unidentifiable": config.allow_unidentifiable,
        "write_trajectories": config.write_trajectories,
        "trajectory_layout": str(config.trajectory_layout),
        "histogram_bins": config.histogram_bins,
        "diagnostic": {
            "epsilon_fraction": config.diagnostic.epsilon_fraction,
            "start_fraction": config.diagnostic.start_fraction,
        },
    }


def _is_yaml(path: Path) -> bool:
    return path.suffix.lower() in (".yaml", ".yml")


def load_config_data(path: Path | str) -> Any:
    """Read a JSON (or, by suffix, YAML) config file without validating it.

    Raises:
        ConfigParseError: If the file cannot be read or parsed.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigParseError(f"Cannot read config '{path}': {e}") from e
    try:
        if _is_yaml(path):
            return yaml.safe_load(text)
        return json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigParseError(f"Malformed config '{path}': {e}") from e


def parse_config(path: Path | str, check_identifiability: bool = True) -> RunConfig:
    """Read, validate and default-fill a run configuration.

    Raises:
        ConfigParseError: Unreadable or malformed file.
        ConfigError: A field violates a constraint.
        IdentifiabilityError: Some wrong hypothesis has no clear-sighted agent
            and ``allow_unidentifiable`` is not set.
    """
    config = config_from_dict(load_config_data(path))
    if check_identifiability:
        config.check_identifiability()
    return config


def dump_config(config: RunConfig, path: Path | str) -> Path:
    """Write a config as JSON (or YAML for .yaml/.yml paths)."""
    path = Path(path)
    data = config_to_dict(config)
    if _is_yaml(path):
        path.write_text(yaml.safe_dump(data, sort_keys=False))
    else:
        path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def discover_presets() -> dict[str, str]:
    """Map preset names to the text of their shipped config files."""
    presets = {}
    try:
        for item in files("belief_pooling.presets").iterdir():
            if item.name.endswith(".json"):
                presets[item.name[: -len(".json")]] = item.read_text()
    except (AttributeError, FileNotFoundError):
        pass
    return presets


def preset_text(name: str) -> str:
    """Raw JSON of a preset.

    Raises:
        ValueError: If no preset has that name.
    """
    presets = discover_presets()
    if name not in presets:
        available = ", ".join(sorted(presets)) or "none"
        raise ValueError(f"Unknown preset '{name}'. Available presets: {available}")
    return presets[name]


def load_preset(name: str) -> RunConfig:
    return config_from_dict(json.loads(preset_text(name)))


def emit_preset(name: str, path: Path | str) -> Path:
    """Write a preset's config file to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if _is_yaml(path):
        return dump_config(load_preset(name), path)
    path.write_text(preset_text(name))
    return path
