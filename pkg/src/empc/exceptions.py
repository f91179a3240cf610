"""Exception hierarchy shared across the package."""


class EmpcError(Exception):
    """Base class for all package errors."""


class InputError(EmpcError, ValueError):
    """Caller passed inconsistent dimensions, shapes, or values."""


class NumericalError(EmpcError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable numbers."""


class NotSchurAdmissibleError(EmpcError):
    """The closed-loop matrix is not Schur-admissible for a Lyapunov solve."""


class NotStabilizableError(EmpcError):
    """Riccati iteration did not converge within the iteration budget."""


class SynthesisError(EmpcError):
    """Terminal-ingredient synthesis failed at some stage."""


class InfeasibleError(EmpcError):
    """The optimal control problem is infeasible at the queried state."""


class ConfigError(EmpcError, ValueError):
    """A configuration document failed validation."""


class CertificateError(EmpcError, ValueError):
    """A certificate document is malformed or inconsistent."""
