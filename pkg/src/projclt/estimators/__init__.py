"""Monte Carlo and optimal-transport estimators of the bounded quantities."""

from ._common import EstimateReport, GaussianReference, QUANTITIES
from .density import (ConditionalKL, DensityEstimate, GridError, conditional_density_y, expected_kl, kl_conditional,
                      marginal_kl, mi_x_y, mi_y_theta, var_density_integral)
from .transport import (ConvergenceError, expected_w2, w2_empirical, w2_empirical_1d, w2_empirical_kd)

__all__ = ["EstimateReport", "GaussianReference", "QUANTITIES", "ConditionalKL", "DensityEstimate", "GridError",
           "conditional_density_y", "expected_kl", "kl_conditional", "marginal_kl", "mi_x_y", "mi_y_theta",
           "var_density_integral", "ConvergenceError", "expected_w2", "w2_empirical", "w2_empirical_1d",
           "w2_empirical_kd"]
