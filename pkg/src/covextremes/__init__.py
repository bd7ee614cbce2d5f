"""Sum-type and max-type statistics of large sample covariance matrices."""

__version__ = "0.1.0"

from .cov_engine import CovSummary, Interval, IntervalUnion, full_offdiag, summarize
from .distributions import MomentProfile, NullModel, child_stream, estimate_m4, exact_m4, quantile_a, sample_matrix
from .statistics import (
    TestOutcome,
    combined_tests,
    compute_dp,
    evaluate_tests,
    mu_n,
    sigma_n_sq,
    stable_decomposition,
    stable_statistic,
    t_statistics,
    z_statistic,
)

__all__ = [
    "CovSummary",
    "Interval",
    "IntervalUnion",
    "MomentProfile",
    "NullModel",
    "TestOutcome",
    "child_stream",
    "combined_tests",
    "compute_dp",
    "estimate_m4",
    "evaluate_tests",
    "exact_m4",
    "full_offdiag",
    "mu_n",
    "quantile_a",
    "sample_matrix",
    "sigma_n_sq",
    "stable_decomposition",
    "stable_statistic",
    "summarize",
    "t_statistics",
    "z_statistic",
]
