"""Biproportional matrix fitting with structural diagnosis.

Alternating row/column rescaling of a nonnegative seed matrix toward target
marginals, together with the combinatorial analysis that decides — ahead of
any iteration — whether the procedure converges geometrically, converges
slowly, or splits into two oscillating limit points, and that produces
certificates for each verdict.  A companion module studies the backward
products of stochastic matrices that drive those convergence proofs.
"""

from .core import (
    FittingProblem,
    MarginalRatios,
    as_marginals,
    check_matrix,
    fit_cols,
    fit_rows,
    kl_divergence,
    likelihood_product,
    marginal_error,
    marginal_ratios,
    support_of,
)
from .engine import (
    IterationTrace,
    RateReport,
    StoppingRule,
    StopReason,
    cross_ratio_check,
    nested_ratio_intervals,
    rate_estimate,
    ratio_update_matrices,
    ratio_update_matrix,
    run,
)
from .errors import InputError, InternalCheckError
from .structure import (
    Behavior,
    BlockStructure,
    Cause,
    Classification,
    Feasibility,
    LimitPair,
    best_cause,
    block_structure,
    classify,
    feasible,
    limit_points,
    maximal_support,
    partition_from_ratios,
)
from .products import (
    AssumptionCheck,
    ProductTrace,
    assumption_check,
    check_diameter_contraction,
    check_dispersion_decrease,
    check_sorted_partial_sums,
    dispersion,
    is_converged,
    mr_matrix,
    mr_sequence,
    offdiag_convergence_report,
    product_run,
    random_doubly_stochastic,
    random_ratio_bounded_stochastic,
    t0t1_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "FittingProblem",
    "MarginalRatios",
    "as_marginals",
    "check_matrix",
    "fit_cols",
    "fit_rows",
    "kl_divergence",
    "likelihood_product",
    "marginal_error",
    "marginal_ratios",
    "support_of",
    "IterationTrace",
    "RateReport",
    "StoppingRule",
    "StopReason",
    "cross_ratio_check",
    "nested_ratio_intervals",
    "rate_estimate",
    "ratio_update_matrices",
    "ratio_update_matrix",
    "run",
    "InputError",
    "InternalCheckError",
    "Behavior",
    "BlockStructure",
    "Cause",
    "Classification",
    "Feasibility",
    "LimitPair",
    "best_cause",
    "block_structure",
    "classify",
    "feasible",
    "limit_points",
    "maximal_support",
    "partition_from_ratios",
    "AssumptionCheck",
    "ProductTrace",
    "assumption_check",
    "check_diameter_contraction",
    "check_dispersion_decrease",
    "check_sorted_partial_sums",
    "dispersion",
    "is_converged",
    "mr_matrix",
    "mr_sequence",
    "offdiag_convergence_report",
    "product_run",
    "random_doubly_stochastic",
    "random_ratio_bounded_stochastic",
    "t0t1_sequence",
    "__version__",
]
