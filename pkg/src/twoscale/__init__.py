"""Two-timescale stochastic approximation with Markov noise.

A generic coupled-recursion engine, its off-policy TDC instantiation on
finite MDPs, exact linear-algebra oracles, ODE-tracking diagnostics, and
assumption audits, plus a config-driven CLI (``twoscale``).
"""
from .audit import (
    MartingaleReport,
    WalkResult,
    estimate_noise_bound,
    lipschitz_estimate,
    martingale_check,
    transient_walk,
)
from .engine import (
    AffineMap,
    CouplingSeries,
    SchedulePair,
    StepSchedule,
    TrajectoryLog,
    TwoTimescaleProblem,
    coupling_error_series,
    interpolate,
    run_two_timescale,
    trajectory_to_csv,
    validate_schedule_pair,
    with_frozen_slow,
)
from .estimator import TdcValueEstimator
from .mdp import (
    FeatureMap,
    FiniteMdp,
    Policy,
    Transition,
    ValidationReport,
    importance_weight,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    random_features,
    random_mdp,
    rho_table,
    sample_step,
    save_mdp,
    tabular_features,
    validate_mdp,
)
from .oracle import (
    IllConditionedError,
    NotIrreducibleError,
    OracleSolution,
    behavior_matrix,
    bellman_value,
    compute_moments,
    grad_J,
    lambda_map,
    objective_J,
    solve_oracle,
    stationary_distribution,
    stationary_distribution_power,
    td_fixed_point,
)
from .ode import (
    OdeField,
    OdeTrajectory,
    faster_field,
    integrate,
    nonautonomous_integrate,
    slower_field,
    tracking_error,
)
from .presets import chain3, chain3_features
from .tdc import (
    TdcProblem,
    conditional_g,
    conditional_h,
    empirical_moments,
    make_tdc_problem,
    td_error,
    tdc_step,
)

__version__ = "0.1.0"
