"""Stochastic proximal subgradient descent with stability diagnostics."""

from ._validation import (
    ComparisonError,
    ConfigurationError,
    ConsistencyError,
    DataCompletenessError,
    DomainError,
    InputError,
    IntegratorError,
    NumericalBlowupError,
    ProxWarning,
    SPGDError,
    SummableScheduleError,
    UndefinedRatioError,
)
from .config import RunConfig, load_config, parse_config
from .diagnostics import (
    Ball,
    Box,
    DiagnosticsReport,
    NeighborhoodPair,
    accumulation_estimate,
    compute_diagnostics,
    find_maximal_intervals,
    interval_subdivision,
    long_interval_series,
    lyapunov_series,
    oscillation_ratio,
    travel_times,
    windowed_drift_sup,
    windowed_noise_sup,
)
from .engine import StepRecord, Trajectory, run_spgd, spgd_step, step_bound_check
from .estimator import SPGDRegressor
from .experiment import ExperimentManifest, compare_runs, run_experiment
from .interpolation import (
    InterpolatedProcess,
    integrate_flow,
    interpolate,
    lyapunov_decrease_check,
    shifted_sup_distance,
)
from .problems import (
    ConstraintSet,
    ProblemSpec,
    Regularizer,
    builtin_problem,
    clarke_subgrad_selection,
    eval_objective,
    prox_map,
)
from .schedule import NoiseModel, Schedule, sample_noise, tau, validate_schedule, window_end

__version__ = "0.1.0"
