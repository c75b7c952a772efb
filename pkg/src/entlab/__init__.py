"""Numerical laboratory for entropic optimal transport with an
Ornstein-Uhlenbeck reference coupling: Gaussian grids, log-domain
Schrodinger solvers, discrete convexity diagnostics, convex-order
machinery and exact Wasserstein distances at desk scale."""

__version__ = "0.1.0"

from .convex_order import (AtomicMeasure, atomic_from_csv, atomic_to_csv,
                           convex_order_check_1d, convex_order_check_lp,
                           dirac_collapse, theta_smooth)
from .convexity import (ConvexityReport, log_convexity_test,
                        prekopa_closure_suite, second_difference_test)
from .measures import (DiscreteMeasure, GammaGrid, GridError, PotentialField,
                       build_gamma_grid, measure_from_potential,
                       potential_field, relative_entropy,
                       shannon_finiteness_report, validate_inputs)
from .ou import (OUKernel, ReferenceCoupling, apply_semigroup,
                 build_ou_kernel, reference_coupling)
from .potentials import evaluate_potential, parse_potential
from .schrodinger import (SchrodingerSolution, duality_certificate,
                          entropic_cost, fortet_solve, gauge_integral,
                          phi_map, sinkhorn_solve)
from .transport import (BrenierMap1D, brenier_map_1d, gj_criterion_check,
                        monotonicity_experiment, w2_exact_1d, w2_exact_lp,
                        zero_noise_sweep)

__all__ = [
    "AtomicMeasure", "BrenierMap1D", "ConvexityReport", "DiscreteMeasure",
    "GammaGrid", "GridError", "OUKernel", "PotentialField",
    "ReferenceCoupling", "SchrodingerSolution", "apply_semigroup",
    "atomic_from_csv", "atomic_to_csv", "brenier_map_1d", "build_gamma_grid",
    "build_ou_kernel", "convex_order_check_1d", "convex_order_check_lp",
    "dirac_collapse", "duality_certificate", "entropic_cost",
    "evaluate_potential", "fortet_solve", "gauge_integral",
    "gj_criterion_check", "log_convexity_test", "measure_from_potential",
    "monotonicity_experiment", "parse_potential", "phi_map",
    "potential_field", "prekopa_closure_suite", "reference_coupling",
    "relative_entropy", "second_difference_test", "shannon_finiteness_report",
    "sinkhorn_solve", "theta_smooth", "validate_inputs", "w2_exact_1d",
    "w2_exact_lp", "zero_noise_sweep",
]
