"""Exception hierarchy shared by all solvers.

The CLI maps these onto exit codes: ``ConfigError`` -> 2,
``NumericalError`` -> 3, ``SelfCheckError`` -> 4.
"""


class BomdlabError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(BomdlabError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(BomdlabError):
    """A run configuration could not be validated."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class NumericalError(BomdlabError):
    """A computation failed for numerical reasons.

    ``partial`` optionally carries whatever was computed before the failure
    (for example a truncated trajectory).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None, partial=None):
        super().__init__(message, partial=partial)
        self.residual = residual


class NearDegeneracyError(NumericalError):
    """The spectral gap fell below ``gap_min``; the adiabatic force is unreliable."""

    def __init__(self, message, gap=None, partial=None):
        super().__init__(message, partial=partial)
        self.gap = gap


class StateTrackingError(NumericalError):
    """Adiabatic continuation lost the tracked electronic state."""

    def __init__(self, message, overlap=None, partial=None):
        super().__init__(message, partial=partial)
        self.overlap = overlap


class CausticError(NumericalError):
    """The characteristic map became singular."""

    def __init__(self, message, time=None, partial=None):
        super().__init__(message, partial=partial)
        self.time = time


class SelfCheckError(BomdlabError):
    """A resolution or quadrature self-check failed."""


class QuadratureError(SelfCheckError):
    """Kernel quadrature did not converge under resolution doubling."""


class GridError(SelfCheckError):
    """The nuclear grid does not resolve the wavefunction."""


class DegenerateFieldError(NumericalError):
    """The density is below the node floor everywhere."""
