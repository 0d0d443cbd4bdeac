"""Empirical risk minimisation with Catoni's robust mean estimator."""

__version__ = "0.1.0"

from .robust_mean import (  # noqa: E402
    CatoniParams,
    MeanEstimate,
    alpha_finite_class,
    alpha_fixed_confidence,
    alpha_simple,
    catoni_mean,
    deviation_bound_fixed,
    deviation_bound_simple,
    median_of_means,
    phi,
    phi_prime,
)
