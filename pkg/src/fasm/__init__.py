"""Factor-augmented penalized basis smoothing of functional data."""

__version__ = "0.1.0"

from .basis import (
    BasisSystem,
    Interval,
    build_bspline_system,
    build_fourier_system,
    build_piecewise_fourier_system,
    equispaced_grid,
    evaluate_basis,
    evaluate_second_derivative,
    penalty_matrix,
)
from .covariance import (
    CovarianceEstimate,
    frobenius_mse,
    model_covariance,
    sample_covariance,
)
from .errors import (
    ArgumentError,
    DegenerateTuningError,
    DimensionError,
    DomainError,
    FasmError,
    NonFiniteDataError,
    ParseError,
    SingularityError,
)
from .estimator import FasmConfig, FasmFit, fit_bsmooth, fit_fasm, select_alpha
from .factor import principal_loadings, projection_complement, select_num_factors
from .simulation import SimulationScenario, generate

__all__ = [
    "ArgumentError", "BasisSystem", "CovarianceEstimate", "DegenerateTuningError",
    "DimensionError", "DomainError", "FasmConfig", "FasmError", "FasmFit",
    "Interval", "NonFiniteDataError", "ParseError", "SimulationScenario",
    "SingularityError", "build_bspline_system", "build_fourier_system",
    "build_piecewise_fourier_system", "equispaced_grid", "evaluate_basis",
    "evaluate_second_derivative", "fit_bsmooth", "fit_fasm", "frobenius_mse",
    "generate", "model_covariance", "penalty_matrix", "principal_loadings",
    "projection_complement", "sample_covariance", "select_alpha",
    "select_num_factors",
]
