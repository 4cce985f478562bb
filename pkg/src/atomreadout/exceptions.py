"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateParameterError(DomainError):
    """Parameters make a closed-form expression undefined."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, value=None, achieved=None):
        super().__init__(message)
        self.value = value
        self.achieved = achieved


class DataError(ValueError):
    """Malformed or inconsistent trial data."""


class AnalysisError(ValueError):
    """An analysis step has nothing to work on."""


class FitError(RuntimeError):
    """Fit did not converge; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IntegrationError(ArithmeticError):
    """The rate-equation stepper could not meet its error tolerance."""


class ConfigError(ValueError):
    """Invalid configuration file or command-line option."""
