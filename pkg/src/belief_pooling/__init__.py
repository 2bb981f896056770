from importlib.metadata import version

from belief_pooling.asymptotics import (
    JensenGap,
    NormalityParams,
    StatisticForm,
    aa_params,
    error_prob_approx,
    ga_params,
    highprob_bound_diagnostic,
    jensen_gap,
    normalize_statistic,
    union_error_prob_approx,
)
from belief_pooling.cli import cli
from belief_pooling.core import (
    Belief,
    ConfidenceWeights,
    HypothesisSet,
    TrajectoryRecord,
    log_belief_ratio,
    map_estimate,
    normalize,
)
from belief_pooling.harness import AggregateReport, compare_rules, run_experiment
from belief_pooling.likelihoods import (
    CategoricalModel,
    Environment,
    ExponentialModel,
    GaussianModel,
    ObservationRound,
    check_global_identifiability,
    kl_divergence,
    log_likelihood,
    log_likelihood_ratios,
    sample_round,
)
from belief_pooling.pooling import (
    PoolingRule,
    RoundState,
    adapt,
    fuse_aa,
    fuse_ga,
    run_centralized_bayes,
    run_trajectory,
)
from belief_pooling.reporting import write_report
from belief_pooling.schema import RunConfig, emit_preset, load_preset, parse_config
from belief_pooling.stats import (
    TestResult,
    histogram_density,
    ks_test_normal,
    sample_moments,
    shapiro_wilk,
    std_normal_cdf,
)

__version__ = version("belief-pooling")

__all__ = [
    "__version__",
    "AggregateReport",
    "Belief",
    "CategoricalModel",
    "ConfidenceWeights",
    "Environment",
    "ExponentialModel",
    "GaussianModel",
    "HypothesisSet",
    "JensenGap",
    "NormalityParams",
    "ObservationRound",
    "PoolingRule",
    "RoundState",
    "RunConfig",
    "StatisticForm",
    "TestResult",
    "TrajectoryRecord",
    "aa_params",
    "adapt",
    "check_global_identifiability",
    "cli",
    "compare_rules",
    "emit_preset",
    "error_prob_approx",
    "fuse_aa",
    "fuse_ga",
    "ga_params",
    "highprob_bound_diagnostic",
    "histogram_density",
    "jensen_gap",
    "kl_divergence",
    "ks_test_normal",
    "load_preset",
    "log_belief_ratio",
    "log_likelihood",
    "log_likelihood_ratios",
    "map_estimate",
    "normalize",
    "normalize_statistic",
    "parse_config",
    "run_centralized_bayes",
    "run_experiment",
    "run_trajectory",
    "sample_moments",
    "sample_round",
    "shapiro_wilk",
    "std_normal_cdf",
    "union_error_prob_approx",
    "write_report",
]
