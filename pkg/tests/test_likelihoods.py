"""Tests for likelihood models, sampling and identifiability."""

import numpy as np
import pytest
import scipy.stats

from belief_pooling import (
    CategoricalModel,
    Environment,
    ExponentialModel,
    GaussianModel,
    HypothesisSet,
    check_global_identifiability,
    kl_divergence,
    log_likelihood,
    log_likelihood_ratios,
    sample_round,
)
from belief_pooling.errors import OutOfSupportError
from belief_pooling.likelihoods import (
    log_ratio_table,
    model_from_dict,
    sample_rounds,
)

MODELS = [
    GaussianModel((0.0, 1.0), 1.0),
    ExponentialModel((1.0, 0.5)),
    CategoricalModel(((0.2, 0.3, 0.5), (0.5, 0.3, 0.2))),
]


class TestModelValidation:
    """Tests for model parameter validation."""

    def test_gaussian_std_positive(self):
        """Non-positive std is rejected."""
        with pytest.raises(ValueError, match="std"):
            GaussianModel((0.0, 1.0), 0.0)

    def test_exponential_means_positive(self):
        """Non-positive means are rejected."""
        with pytest.raises(ValueError, match="positive"):
            ExponentialModel((1.0, -0.5))

    def test_categorical_rows_strictly_positive(self):
        """Zero probabilities would break the shared support."""
        with pytest.raises(ValueError, match="strictly positive"):
            CategoricalModel(((0.0, 1.0), (0.5, 0.5)))

    def test_categorical_rows_sum_to_one(self):
        """Rows must be probability vectors."""
        with pytest.raises(ValueError, match="sum to 1"):
            CategoricalModel(((0.4, 0.4), (0.5, 0.5)))

    def test_from_dict_unknown_type(self):
        """Unknown model types are rejected."""
        with pytest.raises(ValueError, match="Unknown model type"):
            model_from_dict({"type": "poisson", "means": [1, 2]})

    def test_from_dict_round_trip(self):
        """to_dict and model_from_dict are inverses."""
        for model in MODELS:
            assert model_from_dict(model.to_dict()) == model


class TestLogLikelihood:
    """Tests for exact log-density evaluation."""

    def test_standard_normal_peak(self):
        """Gaussian(0, 1) at 0 is -log(2 pi)/2."""
        model = GaussianModel((0.0, 1.0), 1.0)
        assert log_likelihood(model, 0.0, 0) == pytest.approx(-0.918938533, abs=1e-9)

    def test_exponential(self):
        """Exponential(mean 1) at 1 is -1."""
        model = ExponentialModel((1.0, 0.5))
        assert log_likelihood(model, 1.0, 0) == pytest.approx(-1.0, abs=1e-15)

    def test_categorical(self):
        """Categorical row [0.25, 0.75] at symbol 1 is log 0.75."""
        model = CategoricalModel(((0.25, 0.75), (0.5, 0.5)))
        assert log_likelihood(model, 1, 0) == pytest.approx(-0.287682072, abs=1e-9)

    def test_categorical_out_of_alphabet(self):
        """Symbols outside the alphabet raise."""
        model = CategoricalModel(((0.25, 0.75), (0.5, 0.5)))
        with pytest.raises(OutOfSupportError):
            log_likelihood(model, 2, 0)

    def test_exponential_negative(self):
        """Negative exponential observations raise."""
        with pytest.raises(OutOfSupportError):
            log_likelihood(ExponentialModel((1.0, 0.5)), -1.0, 0)


class TestLogLikelihoodRatios:
    """Tests for log-likelihood ratios against the truth."""

    @pytest.mark.parametrize("model", MODELS)
    def test_truth_entry_zero(self, model):
        """The entry at the true hypothesis is exactly zero."""
        hs = HypothesisSet(count=2, true_index=1)
        ratios = log_likelihood_ratios(model, 1.0, hs)
        assert ratios[1] == 0.0
        assert np.all(np.isfinite(ratios))

    def test_midpoint_symmetry(self):
        """Between means 0 and 1 the ratio vanishes."""
        hs = HypothesisSet(count=2, true_index=0)
        ratios = log_likelihood_ratios(GaussianModel((0.0, 1.0), 1.0), 0.5, hs)
        assert ratios[1] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("x", [-1.0, 0.0, 2.0])
    def test_gaussian_linear_form(self, x):
        """log r = x - 1/2 for means (0, 1) and unit std."""
        hs = HypothesisSet(count=2, true_index=0)
        ratios = log_likelihood_ratios(GaussianModel((0.0, 1.0), 1.0), x, hs)
        assert ratios[1] == pytest.approx(x - 0.5, abs=1e-12)


class TestKLDivergence:
    """Tests for closed-form KL divergences."""

    def test_gaussian(self):
        """Means 0 vs 1 with unit std gives 1/2."""
        assert kl_divergence(GaussianModel((0.0, 1.0), 1.0), 0, 1) == 0.5

    def test_exponential(self):
        """Means 1 vs 0.5 gives 1 - log 2."""
        assert kl_divergence(ExponentialModel((1.0, 0.5)), 0, 1) == pytest.approx(
            1 - np.log(2), abs=1e-12
        )

    @pytest.mark.parametrize("model", MODELS)
    def test_identical_is_zero(self, model):
        """KL of a distribution with itself is zero."""
        assert kl_divergence(model, 1, 1) == 0.0

    @pytest.mark.parametrize("model", MODELS)
    def test_non_negative(self, model):
        """KL is positive between distinct parameters."""
        assert kl_divergence(model, 0, 1) > 0
        assert kl_divergence(model, 1, 0) > 0

    @pytest.mark.parametrize("model", MODELS)
    def test_monte_carlo_consistency(self, model):
        """The mean of -log r under the truth matches KL within 4 standard errors."""
        hs = HypothesisSet(count=2, true_index=0)
        env = Environment((model,))
        rng = np.random.default_rng(2024)
        rounds = sample_rounds(env, 0, 1_000_000, rng)
        samples = -log_ratio_table(env, hs, rounds)[:, 0, 1]
        se = samples.std(ddof=1) / np.sqrt(samples.size)
        assert abs(samples.mean() - kl_divergence(model, 0, 1)) <= 4 * se


class TestEnvironment:
    """Tests for environment validation."""

    def test_correlation_requires_gaussian(self):
        """Copula correlation is only for all-Gaussian environments."""
        with pytest.raises(ValueError, match="Gaussian"):
            Environment(
                (GaussianModel((0.0, 1.0), 1.0), ExponentialModel((1.0, 0.5))),
                np.eye(2),
            )

    def test_correlation_must_be_positive_definite(self):
        """Off-diagonal entries above one fail the Cholesky factorization."""
        models = (GaussianModel((0.0, 1.0), 1.0),) * 2
        with pytest.raises(ValueError, match="positive-definite"):
            Environment(models, np.array([[1.0, 1.5], [1.5, 1.0]]))

    def test_correlation_unit_diagonal(self):
        """Diagonal entries must be one."""
        models = (GaussianModel((0.0, 1.0), 1.0),) * 2
        with pytest.raises(ValueError, match="unit diagonal"):
            Environment(models, np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_mismatched_hypotheses(self):
        """All agents must cover the same hypotheses."""
        with pytest.raises(ValueError, match="same number"):
            Environment(
                (GaussianModel((0.0, 1.0), 1.0), GaussianModel((0.0, 1.0, 2.0), 1.0))
            )


class TestSampling:
    """Tests for joint sampling under the truth."""

    def test_round_length(self, gaussian_env):
        """A round carries one value per agent."""
        assert len(sample_round(gaussian_env, 0, np.random.default_rng(0))) == 10

    def test_gaussian_mean(self):
        """Sample mean of 1e5 N(0,1) draws is 0 within 0.02."""
        env = Environment((GaussianModel((0.0, 1.0), 1.0),))
        x = sample_rounds(env, 0, 100_000, np.random.default_rng(1))
        assert abs(x.mean()) < 0.02

    def test_identity_copula_uncorrelated(self):
        """An identity correlation matrix gives uncorrelated agents."""
        env = Environment((GaussianModel((0.0, 1.0), 1.0),) * 3, np.eye(3))
        x = sample_rounds(env, 0, 100_000, np.random.default_rng(2))
        corr = np.corrcoef(x, rowvar=False)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 0.02)

    def test_equicorrelated(self, correlated_env):
        """0.95 off-diagonal correlation is reproduced within 0.01."""
        x = sample_rounds(correlated_env, 0, 100_000, np.random.default_rng(3))
        corr = np.corrcoef(x, rowvar=False)
        off = corr[~np.eye(10, dtype=bool)]
        assert np.all(np.abs(off - 0.95) < 0.01)

    def test_marginals_follow_truth(self):
        """Agents sample from their model under the true hypothesis."""
        models = (ExponentialModel((1.0, 0.5)), GaussianModel((3.0, 0.0), 2.0))
        env = Environment(models)
        x = sample_rounds(env, 0, 100_000, np.random.default_rng(4))
        assert x[:, 0].mean() == pytest.approx(1.0, abs=0.02)
        assert x[:, 1].mean() == pytest.approx(3.0, abs=0.04)

    def test_identity_copula_matches_independent(self):
        """Identity copula and independent sampling agree on every marginal."""
        models = (GaussianModel((0.0, 1.0), 1.5),) * 2
        a = sample_rounds(Environment(models), 0, 20_000, np.random.default_rng(5))
        coupled = Environment(models, np.eye(2))
        b = sample_rounds(coupled, 0, 20_000, np.random.default_rng(6))
        for k in range(2):
            assert scipy.stats.ks_2samp(a[:, k], b[:, k]).pvalue > 0.01

    def test_categorical_symbols(self):
        """Categorical samples are alphabet indices."""
        env = Environment((MODELS[2],))
        x = sample_rounds(env, 1, 1000, np.random.default_rng(7))
        assert set(np.unique(x)) <= {0.0, 1.0, 2.0}

    def test_deterministic(self, correlated_env):
        """Same seed, same rounds."""
        a = sample_rounds(correlated_env, 0, 10, np.random.default_rng(8))
        b = sample_rounds(correlated_env, 0, 10, np.random.default_rng(8))
        assert np.array_equal(a, b)


class TestIdentifiability:
    """Tests for the global identifiability check."""

    def test_experiment_one_passes(self, gaussian_env, binary):
        """Every agent is clear-sighted in the Gaussian experiment."""
        report = check_global_identifiability(gaussian_env, binary)
        assert report.passed
        assert report.entries[0].clear_sighted == tuple(range(10))

    def test_identical_likelihoods_fail(self, binary):
        """No agent can separate identical likelihoods."""
        env = Environment((GaussianModel((0.0, 0.0), 1.0),) * 3)
        report = check_global_identifiability(env, binary)
        assert not report.passed
        assert report.undistinguished == (1,)

    def test_one_clear_sighted_agent_suffices(self, binary):
        """One distinguishing agent among nine blind ones passes."""
        blind = (GaussianModel((0.0, 0.0), 1.0),) * 9
        env = Environment(blind + (GaussianModel((0.0, 1.0), 1.0),))
        report = check_global_identifiability(env, binary)
        assert report.passed
        assert report.entries[0].clear_sighted == (9,)

    def test_per_hypothesis(self):
        """Each wrong hypothesis is checked separately."""
        hs = HypothesisSet(count=3, true_index=0)
        env = Environment((GaussianModel((0.0, 0.0, 1.0), 1.0),))
        report = check_global_identifiability(env, hs)
        assert report.undistinguished == (1,)
