"""Selection-mutation dynamics of a population tracking a shifting, periodically fluctuating optimum."""
from .discretization import Grid1D, build_grid
from .errors import EvoshiftError
from .floquet import critical_speed, periodic_logistic, periodic_quantities, principal_eigenpair
from .kernels import backend
from .model import (
    GrowthRateModel,
    QuadraticRateParams,
    averaged_rate,
    quadratic_model,
    tabulated_model,
    time_constant_model,
)
from .pde import PdeState, SolverConfig, simulate

__version__ = "0.1.0"
BACKEND = backend.name

__all__ = [
    "BACKEND",
    "EvoshiftError",
    "Grid1D",
    "GrowthRateModel",
    "PdeState",
    "QuadraticRateParams",
    "SolverConfig",
    "averaged_rate",
    "build_grid",
    "critical_speed",
    "periodic_logistic",
    "periodic_quantities",
    "principal_eigenpair",
    "quadratic_model",
    "simulate",
    "tabulated_model",
    "time_constant_model",
]
