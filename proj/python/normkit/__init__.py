from ._core import (
    ConfigError,
    DataError,
    DiagonalGaussian,
    Error,
    NumericError,
    adjusted_regression,
    aggregate,
    bh_fdr,
    cohens_d,
    config_echo,
    generate_cohort,
    kl_mixture_bound,
    kl_term,
    kl_to_standard_normal,
    likelihood_ratio,
    mahalanobis,
    p_value_chi2,
    product_of_gaussians,
    run_command,
    sample_mean_cov,
    welch_test,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DiagonalGaussian",
    "Error",
    "NumericError",
    "adjusted_regression",
    "aggregate",
    "bh_fdr",
    "cohens_d",
    "config_echo",
    "generate_cohort",
    "kl_mixture_bound",
    "kl_term",
    "kl_to_standard_normal",
    "likelihood_ratio",
    "mahalanobis",
    "p_value_chi2",
    "product_of_gaussians",
    "run_command",
    "sample_mean_cov",
    "welch_test",
]
