"""Exception types shared across the package."""


class LinMfgError(Exception):
    """Base class for all package errors."""


class ModelValidationError(LinMfgError, ValueError):
    """Raised by :func:`linmfg.model.validate_model`; carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class DimensionMismatch(LinMfgError, ValueError):
    pass


class EmptyVector(LinMfgError, ValueError):
    pass


class LengthMismatch(LinMfgError, ValueError):
    pass


class NegativeMass(LinMfgError, ValueError):
    pass


class NegativeLambda(LinMfgError, ValueError):
    pass


class SingularSystem(LinMfgError, ArithmeticError):
    pass


class NoConvergence(LinMfgError, ArithmeticError):
    pass


class NotInterior(LinMfgError, ValueError):
    """A point (or its H-image) left the strictly positive orthant."""


class SingularJacobian(LinMfgError, ArithmeticError):
    pass


class InitializationFailed(LinMfgError):
    pass


class MassViolation(LinMfgError, ValueError):
    pass


class StateSpaceTooLarge(LinMfgError, ValueError):
    pass


class NTooSmall(LinMfgError, ValueError):
    pass


class AssumptionViolation(LinMfgError, ValueError):
    """A bound was requested under hypotheses that do not hold."""


class ContractionViolation(AssumptionViolation):
    pass


class AssumptionFViolation(AssumptionViolation):
    pass
