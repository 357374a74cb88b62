"""Exception types raised by the interval and significance engines."""


class DomainError(ValueError):
    """An evaluation was requested outside the mathematical domain
    (negative Poisson mean, zero Gaussian width, ...)."""


class QuadratureError(RuntimeError):
    """Numerical integration did not reach the requested tolerance.

    Attributes
    ----------
    achieved : float
        Error estimate of the last refinement step.
    """

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class BracketingError(RuntimeError):
    """A root could not be bracketed within the allowed search range."""


class EmptyConfidenceSetError(RuntimeError):
    """No hypothesis in the scanned grid accepts the observation.

    Usually means the signal grid upper bound is too small; extend it.
    """
