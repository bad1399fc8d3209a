"""Exception hierarchy shared by all modules."""


class BregselError(Exception):
    """Base class for library errors."""


class DomainError(BregselError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedKernelError(BregselError):
    pass


class DegenerateFitError(BregselError):
    """A parameter fit is undefined for the sample (e.g. zero spread)."""


class StepFailureError(BregselError):
    """The one-step update left the parameter space."""


class ConvergenceError(BregselError):
    """Quadrature did not converge; ``partial`` holds the best estimate."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateEstimateError(BregselError):
    """The truncation set of the density estimate is empty."""


class DegenerateVarianceError(BregselError):
    """Bootstrap replicates carry no variability."""


class ParseError(BregselError, ValueError):
    def __init__(self, message, line=None, column=None, token=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.token = token
