"""Exception hierarchy shared by every module in the package."""


class IuaError(Exception):
    """Base class for all errors raised by this package."""


class InputArityError(IuaError, ValueError):
    pass


class NumericOverflowError(IuaError, ArithmeticError):
    pass


class GraphStructureError(IuaError, ValueError):
    pass


class NotSquashableError(IuaError, ValueError):
    pass


class DegenerateLimitsError(IuaError, ValueError):
    pass


class UnknownActivationError(IuaError, KeyError):
    pass


class TransformerUnavailableError(IuaError):
    """Raised for non-monotone activations that carry no min/max evaluator."""


class EmptyAbstractionError(IuaError, ValueError):
    pass


class CalibrationError(IuaError, ValueError):
    pass


class CalibrationRequiredError(CalibrationError):
    pass


class LimitsUnreachableError(CalibrationError):
    pass


class CellTooSmallError(IuaError, ValueError):
    pass


class ThetaBudgetError(IuaError, ValueError):
    pass


class DomainError(IuaError, ValueError):
    pass


class LipschitzError(IuaError, ValueError):
    pass


class GridExplosionError(IuaError):
    pass


class ShapeError(IuaError, ValueError):
    pass


class DimacsError(IuaError, ValueError):
    pass


class GadgetBudgetError(IuaError, ValueError):
    pass


class OracleInfeasibleError(IuaError):
    pass
