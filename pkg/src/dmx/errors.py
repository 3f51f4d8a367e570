"""Exception hierarchy for the dmx package."""


class DmxError(Exception):
    """Base class for all errors raised by dmx."""


class ContractViolation(DmxError, ValueError):
    """Inputs violate a documented precondition (shape, symmetry, ...)."""


class DimensionMismatch(ContractViolation):
    pass


class NumericalFailure(DmxError, ArithmeticError):
    """A factorization or inversion did not succeed."""


class InfeasibleStep(DmxError):
    """The descriptor equation has no solution for the requested step."""

    def __init__(self, step, residual):
        super().__init__(f"inconsistent descriptor equation at step {step} "
                         f"(residual {residual:.3e})")
        self.step = step
        self.residual = residual


class PreconditionViolation(DmxError):
    """A recursion-specific precondition (e.g. a rank condition) fails."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateModel(DmxError):
    pass


class CoefficientAssemblyError(DmxError):
    """Reduced-order filter coefficients came out inconsistent."""


class FiniteEscape(DmxError):
    """Riccati solution exceeded the blow-up bound."""

    def __init__(self, time, norm):
        super().__init__(f"Riccati solution escaped at t={time:.6g} (|K|={norm:.3e})")
        self.time = time
        self.norm = norm
