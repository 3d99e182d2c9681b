"""Heat potentials, heat-ball maximal functions and coupled heat inequalities."""
from ._backend import BACKEND
from .errors import (DataError, DomainError, ParameterError, QuadratureError, ScheduleError,
                     SingularityError)
from .field import GridFunction, GridSpec, heat_residual, integrate, lp_norm
from .kernel import SpaceTimePoint, eval_J, eval_phi, geometry_constants, heat_kernel
from .potential import heat_potential, maximal_M, maximal_Mhat, nonlinear_potential
from .regions import classify, fit_rate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DataError", "DomainError", "GridFunction", "GridSpec", "ParameterError",
    "QuadratureError", "ScheduleError", "SingularityError", "SpaceTimePoint", "classify",
    "eval_J", "eval_phi", "fit_rate", "geometry_constants", "heat_kernel", "heat_potential",
    "heat_residual", "integrate", "lp_norm", "maximal_M", "maximal_Mhat", "nonlinear_potential",
]
