"""Exception hierarchy for qbmnet."""


class QBMError(Exception):
    """Base class for all library errors."""


class ValidationError(QBMError, ValueError):
    """Invalid input data (non-symmetric, non-positive, unphysical, ...)."""


class UnsupportedVariantError(QBMError, NotImplementedError):
    """The requested operation is not available for this damping variant."""


class RootCollisionError(QBMError, ArithmeticError):
    """The Laplace-domain resolvent is singular at the requested point."""

    def __init__(self, message, condition_number):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class DegenerateSpectrumError(QBMError, ArithmeticError):
    """Two characteristic roots coincide within tolerance."""


class ConvergenceError(QBMError, ArithmeticError):
    """An iterative solver failed to converge.

    The ``diagnostics`` attribute carries whatever the solver could report
    (iterates, residuals, root counts).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InconsistentModesError(QBMError, ArithmeticError):
    """A pseudo-mode sum produced a non-negligible imaginary part."""


class AccuracyError(QBMError, ArithmeticError):
    """A quadrature did not reach the requested tolerance."""


class DivergentIntegralError(QBMError, ArithmeticError):
    """The requested covariance does not exist (unstable or unregulated)."""


class IllConditionedError(QBMError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class PoleError(QBMError, ZeroDivisionError):
    """Evaluation point coincides with a pole of a rational approximant."""
