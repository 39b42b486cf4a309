"""
Exception hierarchy for the exposure engine.

Every error carries the process exit code the CLI maps it to:
2 for configuration / validation problems, 3 for numerical failures.
"""

from typing import Optional


class XvaCollocateError(Exception):
    exit_code = 1


class ConfigError(XvaCollocateError, ValueError):
    """Config file missing, unreadable or failing validation."""
    exit_code = 2


class InvalidInputError(XvaCollocateError, ValueError):
    """Arguments handed to a numerical routine violate its preconditions."""
    exit_code = 2


class NumericalError(XvaCollocateError, ArithmeticError):
    exit_code = 3


class SolverError(NumericalError):
    """Curve bootstrap did not converge."""

    def __init__(self, message: str, residual: float, instrument: Optional[int] = None):
        super().__init__(f"{message} (worst residual {residual:.3e})")
        self.residual = residual
        self.instrument = instrument


class CurveDomainError(NumericalError):
    pass


class ZeroAnnuityError(NumericalError):
    pass


class MomentMatrixError(InvalidInputError):
    """Hankel moment matrix is not positive definite."""

    def __init__(self, minor: int):
        super().__init__(f"moment matrix: leading minor of order {minor} is not positive definite")
        self.minor = minor


class TruncationError(NumericalError):
    pass


class UndefinedMetricError(NumericalError):
    pass
