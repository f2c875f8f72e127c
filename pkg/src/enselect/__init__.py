"""Asymptotics and simulation of ensemble variable selection with the lasso.

Theory side: self-consistent descriptions of stability selection (bootstrap
lasso), derandomized knockoffs (knockoff lasso), and the vanilla lasso,
with selection probabilities, TPR/FDR, power curves, and noiseless
reconstruction boundaries.  Simulation side: a seeded finite-size Monte
Carlo harness cross-validating every theory quantity.
"""

from .dko_theory import (
    DkoHatParams,
    DkoOrderParams,
    DkoSolution,
    SelectionThresholds,
    dko_prediction_error,
    dko_selection_probability,
    dko_tpr_fdr,
    solve_dko,
    vanilla_ko_tpr_fdr,
)
from .fixed_point import FixedPointReport, SolverSettings, solve_damped
from .power import PowerCurve, optimal_lambda, power_curve, tpr_at_fdr
from .recon_limit import (
    EffectiveDims,
    PhasePoint,
    effective_dims,
    perfect_recovery_condition,
    phase_boundary_curve,
    solve_v,
)
from .simulator import (
    Dataset,
    EmpiricalResult,
    LassoSettings,
    bootstrap_counts,
    dko_empirical,
    empirical_tpr_fdr,
    generate_dataset,
    generate_knockoff,
    lasso_coordinate_descent,
    run_experiment,
    run_experiment_grid,
    ss_empirical,
)
from .special_math import (
    QuadratureRule,
    SoftThresholdMoments,
    gauss_hermite_expect,
    gauss_hermite_rule,
    gauss_upper_tail,
    poisson_truncated_expect,
    soft_threshold_argmin,
    soft_threshold_gaussian_moments,
)
from .ss_theory import (
    ProblemConfig,
    SsHatParams,
    SsOrderParams,
    SsSolution,
    solve_ss,
    ss_prediction_error,
    ss_selection_probability,
    ss_tpr_fdr,
    vanilla_lasso_solution,
)

__version__ = "0.1.0"
