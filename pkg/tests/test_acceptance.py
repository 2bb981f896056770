"""Full-scale experiment checks.

These run the shipped presets at their published size and take minutes, so
they are marked slow and deselected by default. Run them with ``pytest -m slow``.
"""

import json

import numpy as np
import pytest

from belief_pooling import (
    PoolingRule,
    StatisticForm,
    aa_params,
    compare_rules,
    error_prob_approx,
    load_preset,
    normalize_statistic,
    run_experiment,
)
from belief_pooling.schema import config_from_dict, preset_text
from belief_pooling.stats import sample_moments

pytestmark = pytest.mark.slow

ALPHA = 0.01


@pytest.fixture(scope="module")
def experiment_one():
    return run_experiment(load_preset("experiment-1"))


def passes_normality(report) -> bool:
    for rule in report.rules.values():
        for check in rule.normality:
            if check.ks.rejects(ALPHA) or check.shapiro_wilk.rejects(ALPHA):
                return False
    return True


class TestExperimentOne:
    """Independent Gaussian agents."""

    def test_ga_rate_and_slopes(self, experiment_one):
        """rho_G is one half and GA slopes cluster within 0.02 of it."""
        ga = experiment_one[PoolingRule.GA]
        assert ga.params_for(1).rho == pytest.approx(0.5, abs=1e-15)
        assert ga.slope_fraction(1, 0.02) >= 0.95

    @pytest.mark.parametrize("rule", list(PoolingRule))
    def test_moments(self, experiment_one, rule):
        """Normalized statistics have mean near 0 and variance near 1."""
        mean, variance = sample_moments(experiment_one[rule].normalized(1))
        assert -0.15 <= mean <= 0.15
        assert 0.8 <= variance <= 1.2

    def test_no_errors_at_horizon(self, experiment_one):
        """After 5000 rounds no realization picks the wrong hypothesis."""
        for rule in experiment_one.rules.values():
            assert rule.error_counts[-1] == 0
            assert rule.predicted_error[-1] < 1e-10

    def test_decay_bound(self, experiment_one):
        """The AA decay bound from a fifth of the horizon holds for 90% of realizations."""
        assert experiment_one[PoolingRule.AA].bound_fraction >= 0.9

    @pytest.mark.parametrize("rule", list(PoolingRule))
    def test_log_belief_and_ratio_forms_agree(self, experiment_one, rule):
        """The log-belief statistic mirrors the ratio statistic once mu(truth) ~ 1."""
        report = experiment_one[rule]
        params = report.params_for(1)
        horizon = int(report.times[-1])
        ratio = normalize_statistic(report.lambda_at_horizon[:, 1], params, horizon)
        log_belief = normalize_statistic(
            report.log_beliefs[:, -1, 1], params, horizon, StatisticForm.LOG_BELIEF
        )
        assert np.max(np.abs(log_belief + ratio)) <= 0.01

    def test_jensen_gap(self, experiment_one):
        """GA decays strictly faster than AA."""
        assert all(gap.strictly_positive for gap in experiment_one.jensen)


class TestNormalityAcrossSeeds:
    """Normality claims for experiments 1 and 2 over ten master seeds."""

    @pytest.mark.parametrize("name", ["experiment-1", "experiment-2"])
    def test_nine_of_ten(self, name):
        """KS and Shapiro-Wilk fail to reject at 1% for at least nine seeds."""
        base = load_preset(name)
        passed = sum(
            passes_normality(run_experiment(base.with_overrides(seed=seed)))
            for seed in range(1, 11)
        )
        assert passed >= 9


class TestCorrelation:
    """Experiment 3 against experiment 1."""

    def test_ga_concentration(self):
        """GA ratios concentrate around 2500 despite the correlation."""
        report = run_experiment(load_preset("experiment-3").with_overrides(rules=("ga",)))
        ga = report[PoolingRule.GA]
        params = ga.params_for(1)
        assert params.rho == pytest.approx(0.5, abs=1e-15)
        mean = float(np.mean(ga.lambda_at_horizon[:, 1]))
        assert abs(mean - 2500) <= 3 * params.sigma * np.sqrt(5000)

    def test_aa_rate_increases(self):
        """Correlation pushes rho_A up, with separated 4-SE bands."""
        rates = {}
        for name in ("experiment-1", "experiment-3"):
            config = load_preset(name)
            rates[name] = aa_params(
                config.environment, config.hypotheses, config.weights, 1,
                config.estimator_samples, config.seed, threads=4,
            )
        low, high = rates["experiment-1"], rates["experiment-3"]
        assert low.rho + 4 * low.std_error_rho < high.rho - 4 * high.std_error_rho


class TestErrorApproximation:
    """Empirical error against the Gaussian approximation with a shrunken mean gap."""

    def test_shrunken_gap(self):
        """Within a factor of 3 where measurable, and GA never worse than AA."""
        data = json.loads(preset_text("experiment-1"))
        for agent in data["agents"]:
            agent["means"] = [0.0, 0.25]
        data.update(horizon=200, record_every=50, realizations=5000)
        config = config_from_dict(data)
        report = run_experiment(config)
        comparison = compare_rules(report)
        times = report.times.tolist()
        for i in (50, 100, 200):
            idx = times.index(i)
            assert comparison.ga_rates[idx] <= comparison.aa_rates[idx]
            for rule in report.rules.values():
                empirical = rule.error_rates[idx]
                if empirical <= 10 / config.realizations:
                    continue
                predicted = error_prob_approx(rule.params_for(1), i)
                assert predicted / 3 <= empirical <= 3 * predicted
