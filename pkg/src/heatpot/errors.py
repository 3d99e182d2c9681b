"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An input violates a stated precondition."""


class DomainError(ValueError):
    """An operation is undefined on the given grid or point."""


class SingularityError(DomainError):
    """Evaluation requested at the heat-kernel singularity."""


class DataError(ValueError):
    """Sampled data is insufficient for the requested fit."""


class ScheduleError(RuntimeError):
    """A construction schedule could not satisfy its invariants."""


class QuadratureError(RuntimeError):
    """Quadrature could not reach the requested tolerance.

    ``achieved`` carries the best error bound that was reached.
    """

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved bound {achieved:.3e})")
        self.achieved = achieved
