"""Exception types shared across the package."""


class DcApproxError(Exception):
    """Base class for all package errors."""


class OrderTooHigh(DcApproxError, ValueError):
    pass


class InconsistentMoments(DcApproxError, ArithmeticError):
    pass


class MGFDiverges(DcApproxError, ValueError):
    pass


class DimensionTooHigh(DcApproxError, ValueError):
    pass


class YOutOfRange(DcApproxError, ValueError):
    pass


class XOutOfRange(DcApproxError, ValueError):
    pass


class DegreeTooSmall(DcApproxError, ValueError):
    pass


class TailNeverSmall(DcApproxError, ArithmeticError):
    pass


class PrecisionExhausted(DcApproxError, ArithmeticError):
    pass


class QuadratureInsufficient(DcApproxError, ArithmeticError):
    pass


class BasisTooLarge(DcApproxError, MemoryError):
    pass


class ParameterOutOfRange(DcApproxError, ValueError):
    pass


class NormalizationFailed(DcApproxError, ArithmeticError):
    pass


class SolverStalled(DcApproxError, RuntimeError):
    pass


class PlanInvalid(DcApproxError, ValueError):
    pass


class CriterionFailed(DcApproxError):
    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("criteria failed: " + ", ".join(map(str, self.failed)))
