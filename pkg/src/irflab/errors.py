"""Exception types raised across the package."""


class IrfError(Exception):
    """Base class for all package errors."""


class IndexBelowFloor(IrfError, IndexError):
    def __init__(self, index, floor):
        super().__init__(f"index {index} is below the source floor {floor}")
        self.index = index
        self.floor = floor


class InvalidDimension(IrfError, ValueError):
    pass


class DimensionMismatch(IrfError, ValueError):
    pass


class NonReversible(IrfError, ValueError):
    pass


class StateEscaped(IrfError, FloatingPointError):
    """Non-finite state encountered; the run is unstable or overflowed."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite state at step {step}")
        self.step = step


class NotConverged(IrfError):
    def __init__(self, max_depth, ladder=None, message=None):
        super().__init__(message or f"negative iteration did not converge by depth {max_depth}")
        self.max_depth = max_depth
        self.ladder = ladder


class MonotoneDivergence(IrfError):
    def __init__(self, depth, value, ceiling, ladder=None):
        super().__init__(f"monotone ladder reached {value} > ceiling {ceiling} at depth {depth}")
        self.depth = depth
        self.value = value
        self.ceiling = ceiling
        self.ladder = ladder


class NotCoalesced(IrfError):
    def __init__(self, max_n):
        super().__init__(f"trajectories did not coalesce within {max_n} steps")
        self.max_n = max_n


class MethodUnavailable(IrfError):
    pass


class SingularMeanMatrix(IrfError, ValueError):
    pass


class InvalidEnvelope(IrfError, ValueError):
    pass


class DriftViolated(IrfError, ValueError):
    pass


class GateViolated(IrfError):
    pass


class ConfigError(IrfError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BudgetExceeded(IrfError):
    pass
