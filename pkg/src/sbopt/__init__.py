"""Simulation-based optimization of time-varying tolls.

Four derivative-free solvers (a density-feedback PI controller,
regressing kriging with expected-improvement infill, DIRECT
partitioning, and SPSA) share one budgeted black-box objective contract,
plus a single-reservoir traffic simulator to optimize against and a
benchmark harness for seed-replicated solver comparisons.
"""

from .core import (
    Bounds,
    BudgetExhausted,
    DimensionMismatch,
    Evaluation,
    EvaluationError,
    Evaluator,
    SboError,
    Trace,
    best_so_far,
    clamp,
    write_trace_csv,
)
from .constraints import (
    PenaltyConfig,
    PenaltyTransform,
    SmoothingSpec,
    is_feasible,
    penalize,
    penalty_weight_from_probe,
    violations,
)
from .kriging import (
    EIProposal,
    FitConfig,
    FitError,
    InfillConfig,
    InfillSearchError,
    KrigingModel,
    LhsDesign,
    expected_improvement,
    fit,
    gaussian_correlation,
    loo_cv,
    maximin_lhs,
    predict,
    propose_infill,
    random_lhs,
    reinterp_error,
    run_rk,
)
from .pi_control import PIConfig, pi_init, pi_step, run_pi, write_pi_log
from .direct import (
    DirectState,
    Hyperrect,
    half_diagonal,
    identify_potentially_optimal,
    run_direct,
    trisect,
    write_direct_cells,
)
from .spsa import SpsaGains, StopRule, approx_gradient, perturbation, run_spsa, write_spsa_log
from .mfdsim import (
    NfdCurve,
    ReservoirConfig,
    SimOutput,
    SimulationError,
    TollScheme,
    apply_numerical_noise,
    load_scenario,
    network_average,
    nfd_flow,
    objective_density,
    objective_flow,
    run_reservoir,
    save_scenario,
    write_series_csv,
)

__version__ = "0.1.0"
