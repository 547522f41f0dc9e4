"""Solver and verification toolkit for -b div(Du/|Du|) - div(|Du|^(p-2) Du) = f."""
from .density import DensityParams, ExactDensity, RelaxedDensity, ellipticity_bounds, support_gauge
from .discretize import Grid, ProblemSpec, ScalarField, VectorField
from .errors import (ConfigError, DomainError, FacetflowError, LinearSolverError, NonConvergenceError,
                     NumericalError, OracleError, SingularityError, UsageError)
from .mollifier import MollifierSpec
from .problems import builtin_problem, oracle_1d, oracle_bingham_pipe
from .solver import ContinuationSchedule, SolverConfig, continuation_solve, solve_fixed_eps

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContinuationSchedule", "DensityParams", "DomainError", "ExactDensity", "FacetflowError",
    "Grid", "LinearSolverError", "MollifierSpec", "NonConvergenceError", "NumericalError", "OracleError",
    "ProblemSpec", "RelaxedDensity", "ScalarField", "SingularityError", "SolverConfig", "UsageError",
    "VectorField", "builtin_problem", "continuation_solve", "ellipticity_bounds", "oracle_1d",
    "oracle_bingham_pipe", "solve_fixed_eps", "support_gauge",
]
