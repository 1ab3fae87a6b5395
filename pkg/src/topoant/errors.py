"""Exception types raised across the package."""


class TopoAntError(Exception):
    """Base class for all package errors."""


# geometry
class NonPositiveIncrement(TopoAntError, ValueError):
    pass


class DegenerateOutline(TopoAntError, ValueError):
    pass


class EnclosureFailure(TopoAntError, RuntimeError):
    pass


class InfeasibleBounds(TopoAntError, ValueError):
    pass


# simulation / data exchange
class OutOfRange(TopoAntError, ValueError):
    pass


class AdapterTimeout(TopoAntError, TimeoutError):
    pass


class AdapterError(TopoAntError, RuntimeError):
    pass


class ParseError(TopoAntError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class NonMonotoneGrid(TopoAntError, ValueError):
    pass


# features / objectives
class WindowTooNarrow(TopoAntError, ValueError):
    pass


class EmptyResponse(TopoAntError, ValueError):
    pass


class BandNotCovered(TopoAntError, ValueError):
    pass


# optimization / orchestration
class DegenerateCenter(TopoAntError, RuntimeError):
    pass


class AllDegenerate(TopoAntError, RuntimeError):
    pass


class BudgetExhausted(TopoAntError, RuntimeError):
    pass


class ConfigError(TopoAntError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
