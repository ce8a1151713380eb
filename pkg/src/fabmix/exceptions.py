"""Exception and warning types shared across the package."""


class MixtureError(Exception):
    """Base class for numerical failures raised by fabmix."""


class DimensionError(MixtureError):
    """Shapes of inputs do not agree (vector length, matrix size, ...)."""


class SingularCovarianceError(MixtureError):
    """A covariance matrix could not be factorized even after jitter repair."""


class DegenerateComponentError(MixtureError):
    """A component's effective count fell below the usable floor.

    Carries optional ``sweep``/``datum``/``iteration`` attributes locating
    where the degeneration happened inside a fitting loop.
    """

    def __init__(self, message, *, iteration=None, sweep=None, datum=None):
        super().__init__(message)
        self.iteration = iteration
        self.sweep = sweep
        self.datum = datum


class DegenerateComponentWarning(UserWarning):
    """Emitted when a soft count had to be clamped at the count floor."""
