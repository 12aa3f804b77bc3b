"""Exception hierarchy shared by all modules."""


class FracBoltzError(Exception):
    """Base class for every error raised by the package."""


class DomainError(FracBoltzError, ValueError):
    """An argument lies outside the admissible parameter range."""


class SingularityError(DomainError):
    """Evaluation requested at a singular point of a kernel."""


class ConvergenceError(FracBoltzError, ArithmeticError):
    """A quadrature or iteration failed to reach its tolerance."""


class GridMismatch(FracBoltzError, ValueError):
    """Two characteristic functions live on different radial grids."""


class ModelMissing(FracBoltzError, ValueError):
    """An origin or tail model is required but absent."""


class InterpolationOutOfRange(FracBoltzError, ValueError):
    """A query radius is not covered by the grid or by the tail model."""


class NonCutoffKernel(FracBoltzError, ValueError):
    """The gain operator was requested for a kernel with infinite gamma_2."""


class NoContraction(ConvergenceError):
    """Picard iterates stopped contracting at the expected rate."""


class ToleranceNotMet(ConvergenceError):
    """Picard iteration hit its iteration cap before the tolerance."""


class NotCauchy(ConvergenceError):
    """Traces along a truncation schedule failed to approach each other."""


class ConfigMismatch(FracBoltzError, ValueError):
    """Two traces cannot be compared (grid, kernel or solver settings differ)."""


class NotIntegrable(FracBoltzError, ValueError):
    """A characteristic function has no decaying tail model."""


class ConfigError(FracBoltzError, ValueError):
    """An experiment configuration failed to parse or validate."""
