"""Tests for run configuration parsing and validation."""

import json
from textwrap import dedent

import numpy as np
import pytest

from belief_pooling import Belief, PoolingRule, emit_preset, load_preset, parse_config
from belief_pooling.errors import ConfigError, ConfigParseError, IdentifiabilityError
from belief_pooling.schema import (
    TrajectoryLayout,
    config_from_dict,
    config_to_dict,
    discover_presets,
    dump_config,
)

from tests.conftest import PRESET_WEIGHTS


def minimal(**overrides):
    data = {
        "hypotheses": {"count": 2, "true_index": 0},
        "agents": [{"type": "gaussian", "means": [0.0, 1.0], "std": 1.0}] * 3,
        "weights": [0.5, 0.25, 0.25],
        "horizon": 200,
        "realizations": 10,
    }
    data.update(overrides)
    return data


def write_json(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestDefaults:
    """Tests for default filling."""

    def test_minimal_config(self):
        """Optional fields receive their documented defaults."""
        config = config_from_dict(minimal())
        assert config.seed == 1
        assert config.record_every == 2
        assert config.rules == (PoolingRule.AA, PoolingRule.GA)
        assert config.initial_belief == Belief.uniform(2)
        assert config.estimator_samples == 1_000_000
        assert config.environment.correlation is None
        assert config.diagnostic.start(200) == 40

    def test_short_horizon_records_every_step(self):
        """record_every never drops below one."""
        assert config_from_dict(minimal(horizon=50)).record_every == 1

    def test_rules_both(self):
        """'both' expands to AA then GA."""
        config = config_from_dict(minimal(rules="both"))
        assert config.rules == (PoolingRule.AA, PoolingRule.GA)

    def test_overrides(self):
        """None overrides are ignored; others are revalidated."""
        config = config_from_dict(minimal())
        assert config.with_overrides(seed=None) is config
        assert config.with_overrides(seed=7).seed == 7
        with pytest.raises(ConfigError, match="'horizon'"):
            config.with_overrides(horizon=0)

    def test_default_record_every_follows_horizon(self):
        """A defaulted record_every is recomputed when the horizon changes."""
        config = config_from_dict(minimal(horizon=10_000))
        assert config.record_every == 100
        shorter = config.with_overrides(horizon=50)
        assert shorter.record_every == 1
        assert shorter.with_overrides(horizon=1000).record_every == 10
        assert config.with_overrides(seed=3).record_every == 100

    def test_explicit_record_every_survives_horizon(self):
        """An explicit record_every is kept across horizon overrides."""
        config = config_from_dict(minimal(horizon=10_000, record_every=500))
        assert config.with_overrides(horizon=50).record_every == 500
        assert config.with_overrides(horizon=50, record_every=5).record_every == 5

    def test_default_record_every_round_trip(self):
        """Serializing a defaulted record_every keeps it defaulted."""
        config = config_from_dict(minimal(horizon=10_000))
        data = config_to_dict(config)
        assert data["record_every"] is None
        again = config_from_dict(data)
        assert again == config
        assert again.with_overrides(horizon=300).record_every == 3


class TestValidationErrors:
    """Tests for constraint violations naming their field."""

    def test_weights_sum(self):
        """Weights summing to 0.99 name the weights field."""
        with pytest.raises(ConfigError, match="'weights'") as exc:
            config_from_dict(minimal(weights=[0.5, 0.25, 0.24]))
        assert exc.value.field == "weights"

    def test_weights_count(self):
        """One weight per agent."""
        with pytest.raises(ConfigError, match="one per agent"):
            config_from_dict(minimal(weights=[0.5, 0.5]))

    def test_missing_required(self):
        """Required keys must be present."""
        data = minimal()
        del data["horizon"]
        with pytest.raises(ConfigError, match="'horizon': is required"):
            config_from_dict(data)

    def test_unknown_key(self):
        """Typos are not silently ignored."""
        with pytest.raises(ConfigError, match="unknown configuration key"):
            config_from_dict(minimal(horizn=10))

    def test_bad_model(self):
        """Model errors point at the agent."""
        agents = [{"type": "gaussian", "means": [0.0, 1.0], "std": -1.0}] * 3
        with pytest.raises(ConfigError, match=r"'agents\[0\]'"):
            config_from_dict(minimal(agents=agents))

    def test_boolean_is_not_integer(self):
        """JSON booleans are not accepted as counts."""
        with pytest.raises(ConfigError, match="boolean"):
            config_from_dict(minimal(realizations=True))

    def test_correlation_not_positive_definite(self):
        """A correlation above one fails positive-definiteness."""
        corr = [[1.0, 1.2, 0.0], [1.2, 1.0, 0.0], [0.0, 0.0, 1.0]]
        with pytest.raises(ConfigError, match="'correlation'"):
            config_from_dict(minimal(correlation=corr))

    def test_per_agent_prior_count(self):
        """Per-agent priors need one prior per agent."""
        with pytest.raises(ConfigError, match="per_agent"):
            config_from_dict(minimal(initial_belief={"per_agent": [[0.5, 0.5]]}))

    def test_prior_must_sum_to_one(self):
        """An explicit prior is a probability vector."""
        with pytest.raises(ConfigError, match="'initial_belief'"):
            config_from_dict(minimal(initial_belief=[0.6, 0.6]))

    def test_layout(self):
        """Trajectory layouts are an enumeration."""
        with pytest.raises(ConfigError, match="trajectory_layout"):
            config_from_dict(minimal(trajectory_layout="wide"))

    @pytest.mark.parametrize("value", ["half", None, [0.5], True])
    def test_diagnostic_must_be_numeric(self, value):
        """Non-numeric diagnostic settings name the offending key."""
        with pytest.raises(ConfigError, match="'diagnostic.epsilon_fraction'") as exc:
            config_from_dict(minimal(diagnostic={"epsilon_fraction": value}))
        assert exc.value.field == "diagnostic.epsilon_fraction"

    def test_diagnostic_range(self):
        """Numeric diagnostic settings are range-checked."""
        with pytest.raises(ConfigError, match="'diagnostic.start_fraction'"):
            config_from_dict(minimal(diagnostic={"start_fraction": 1}))


class TestFiles:
    """Tests for reading and writing config files."""

    def test_parse_json(self, tmp_path):
        """Reads a JSON file."""
        config = parse_config(write_json(tmp_path, minimal(seed=3)))
        assert config.seed == 3

    def test_parse_yaml(self, tmp_path):
        """A .yaml suffix selects the YAML reader."""
        path = tmp_path / "config.yaml"
        path.write_text(
            dedent("""
                hypotheses: {count: 2, true_index: 1}
                agents:
                  - {type: exponential, means: [1.0, 0.5]}
                weights: [1.0]
                horizon: 10
                realizations: 2
                trajectory_layout: long
            """)
        )
        config = parse_config(path)
        assert config.hypotheses.true_index == 1
        assert config.trajectory_layout is TrajectoryLayout.LONG

    def test_malformed_json(self, tmp_path):
        """Broken syntax is a parse error, not a validation error."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigParseError, match="Malformed"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        """Unreadable files are parse errors."""
        with pytest.raises(ConfigParseError, match="Cannot read"):
            parse_config(tmp_path / "nope.json")

    def test_round_trip(self, tmp_path):
        """dump_config and parse_config are inverses."""
        config = config_from_dict(
            minimal(correlation=[[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
        )
        assert parse_config(dump_config(config, tmp_path / "c.json")) == config
        assert parse_config(dump_config(config, tmp_path / "c.yml")) == config

    def test_uniform_prior_written_as_keyword(self):
        """The default prior serializes as 'uniform'."""
        assert config_to_dict(config_from_dict(minimal()))["initial_belief"] == "uniform"


class TestIdentifiability:
    """Tests for the identifiability gate at load time."""

    def blind(self):
        return minimal(agents=[{"type": "gaussian", "means": [0.0, 0.0], "std": 1.0}] * 3)

    def test_rejected(self, tmp_path):
        """No clear-sighted agent refuses the config."""
        with pytest.raises(IdentifiabilityError, match="hypotheses 1"):
            parse_config(write_json(tmp_path, self.blind()))

    def test_override(self, tmp_path):
        """allow_unidentifiable lets the run proceed."""
        data = self.blind()
        data["allow_unidentifiable"] = True
        config = parse_config(write_json(tmp_path, data))
        assert not config.check_identifiability().passed

    def test_skip_check(self, tmp_path):
        """Loading without the check defers the decision to the caller."""
        config = parse_config(write_json(tmp_path, self.blind()), check_identifiability=False)
        assert config.allow_unidentifiable is False


class TestPresets:
    """Tests for the shipped experiment presets."""

    def test_discovered(self):
        """All three experiments ship with the package."""
        assert {"experiment-1", "experiment-2", "experiment-3"} <= set(discover_presets())

    @pytest.mark.parametrize("name", ["experiment-1", "experiment-2", "experiment-3"])
    def test_shared_settings(self, name):
        """Presets share agents, weights, horizon and realization count."""
        config = load_preset(name)
        assert len(config.environment) == 10
        assert config.weights.pi == PRESET_WEIGHTS
        assert config.horizon == 5000
        assert config.realizations == 500
        assert config.check_identifiability().passed

    def test_experiment_three_correlation(self):
        """Off-diagonal correlation 0.95."""
        corr = load_preset("experiment-3").environment.correlation
        assert np.allclose(corr[~np.eye(10, dtype=bool)], 0.95)

    def test_unknown(self):
        """Unknown names list what is available."""
        with pytest.raises(ValueError, match="Available presets"):
            load_preset("experiment-9")

    def test_emit(self, tmp_path):
        """An emitted preset parses back to the same config."""
        path = emit_preset("experiment-2", tmp_path / "out" / "experiment-2.json")
        assert parse_config(path) == load_preset("experiment-2")
