"""Exception types shared across the package."""


class SslLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SslLabError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class ParameterError(SslLabError, ValueError):
    """A scalar / enum parameter is outside its documented domain."""


class DegenerateInputError(SslLabError, ValueError):
    """Input is degenerate for the operation (e.g. normalizing a zero vector)."""


class AssumptionError(SslLabError, ValueError):
    """A precondition of a closed-form result is violated; names the check."""


class ConvergenceError(SslLabError, RuntimeError):
    """An iteration cap was exhausted before reaching tolerance.

    Carries the final per-branch deltas so callers can report how far the
    iteration still was from its stopping rule.
    """

    def __init__(self, message, deltas=None):
        super().__init__(message)
        self.deltas = deltas


class DivergenceError(SslLabError, RuntimeError):
    """Training produced a non-finite loss."""
