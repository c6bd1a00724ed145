"""Multi-type continuous-state branching processes with immigration.

Exact moment, spectral and Laplace-transform formulas for finite-activity
models, reproducible jump-diffusion ensemble simulation, and a statistical
harness that checks the simulated dynamics against the closed-form theory,
including the supercritical growth limits.
"""

from .model import (
    JumpMeasure,
    ModelParams,
    SchemaError,
    ValidationReport,
    load_model,
    measure_functional,
    validate_admissible,
)
from .moments import (
    AsymptoticLimit,
    SecondMomentBreakdown,
    mean_vector,
    second_moment_limit,
    second_moment_projection,
)
from .riccati import (
    FlowResult,
    OdeConfig,
    branching_mechanism,
    decomposition_defect,
    flow_defect,
    immigration_mechanism,
    laplace_transform,
    solve_v,
)
from .simulate import (
    EnsembleStats,
    SimConfig,
    SimulationError,
    Trajectory,
    ensemble_csv,
    simulate_ensemble,
    simulate_path,
    trajectory_csv,
)
from .spectral import (
    DefectiveSpectrumError,
    NotIrreducibleError,
    SpectralData,
    build_mean_params,
    left_eigenpairs,
    matrix_exponential,
    perron_and_classify,
)
from .verify import (
    CheckResult,
    PreconditionError,
    VerificationReport,
    convergence_series,
    default_limit_grid,
    direction_residual,
    laplace_check,
    martingale_defect,
    moment_check,
)

__all__ = [
    "JumpMeasure",
    "ModelParams",
    "SchemaError",
    "ValidationReport",
    "load_model",
    "measure_functional",
    "validate_admissible",
    "AsymptoticLimit",
    "SecondMomentBreakdown",
    "mean_vector",
    "second_moment_limit",
    "second_moment_projection",
    "FlowResult",
    "OdeConfig",
    "branching_mechanism",
    "decomposition_defect",
    "flow_defect",
    "immigration_mechanism",
    "laplace_transform",
    "solve_v",
    "EnsembleStats",
    "SimConfig",
    "SimulationError",
    "Trajectory",
    "ensemble_csv",
    "simulate_ensemble",
    "simulate_path",
    "trajectory_csv",
    "DefectiveSpectrumError",
    "NotIrreducibleError",
    "SpectralData",
    "build_mean_params",
    "left_eigenpairs",
    "matrix_exponential",
    "perron_and_classify",
    "CheckResult",
    "PreconditionError",
    "VerificationReport",
    "convergence_series",
    "default_limit_grid",
    "direction_residual",
    "laplace_check",
    "martingale_defect",
    "moment_check",
]

__version__ = "0.1.0"
