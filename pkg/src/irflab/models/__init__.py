"""Model zoo: affine, stochastic gradient, Lindley, Langevin and branching maps."""
from .affine import make_affine, make_log_multiplicative, make_multiplicative, stationary_variance_scalar
from .gwi import make_gwi, stationary_mean
from .langevin import (LinearDataDrift, QuadraticDrift, TanhDrift, contraction_bound, langevin_stationary_variance,
                       make_langevin, stepsize_threshold)
from .lindley import lindley_ladder_all, make_lindley, mm1_mean_wait, vstar_closed_form
from .sg import average_trajectory, bias_estimate, make_sg, mean_pair, target

__all__ = [
    "LinearDataDrift",
    "QuadraticDrift",
    "TanhDrift",
    "average_trajectory",
    "bias_estimate",
    "contraction_bound",
    "langevin_stationary_variance",
    "lindley_ladder_all",
    "make_affine",
    "make_gwi",
    "make_langevin",
    "make_lindley",
    "make_log_multiplicative",
    "make_multiplicative",
    "make_sg",
    "mean_pair",
    "mm1_mean_wait",
    "stationary_mean",
    "stationary_variance_scalar",
    "stepsize_threshold",
    "target",
    "vstar_closed_form",
]
