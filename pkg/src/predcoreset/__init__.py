"""Predictive coreset construction for cost-aware sampling of sensor streams."""

from .bounds import BoundParams, bound_terms, coreset_objective, nu
from .builder import CoresetBuilder, ProtocolError, WindowDecision
from .calibration import (
    CalibrationConfig,
    InfeasibleConfigError,
    chi2_cdf,
    chi2_inv_cdf,
    corollary_radius,
    derive_radii,
    min_feasible_delta,
)
from .cover import CoverInstance, CoverSolution, feasibility_maxflow, solve, solve_exact, solve_greedy_msc
from .forecasting import ARForecaster, Forecaster, GaussianOracleForecaster, PersistenceForecaster, nrmse
from .geometry import (
    CoverageAssignment,
    KDTree,
    Sample,
    WeightedCoreset,
    distance,
    is_delta_cover,
    nearest_neighbor,
    weight_norm,
)
from .harness import (
    PipelineConfig,
    RunReport,
    StreamDataset,
    class_distribution,
    coverage_check,
    kcenter_window_baseline,
    random_baseline,
    run_pipeline,
)

__version__ = "0.1.0"
