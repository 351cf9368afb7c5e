"""
Exception hierarchy for the time-change lab.

Each error also derives from the closest builtin so callers may catch either.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""


class LabError(Exception):
    """Base class for all lab errors."""


class InvalidArgumentError(LabError, ValueError):
    """An argument violates a documented precondition."""


class OutOfRangeError(LabError, IndexError):
    """A time or index falls outside the covered horizon."""


class NumericFailureError(LabError, ArithmeticError):
    """A callable produced a negative or non-finite value."""

    def __init__(self, message: str, location: float | None = None) -> None:
        super().__init__(message if location is None else f"{message} (at {location!r})")
        self.location = location


class HorizonExhaustedError(LabError, RuntimeError):
    """The base path ended before the clock reached its target."""

    def __init__(self, reached: float, target: float, horizon: float) -> None:
        super().__init__(
            f"clock reached {reached:.6g} < target {target:.6g} before base horizon "
            f"{horizon:.6g}; extend the base path"
        )
        self.reached = reached
        self.target = target
        self.horizon = horizon


class DegenerateRegimeError(LabError, ValueError):
    """Forward integration was asked to cross a zero of the coefficient."""


class InfeasibleScenarioError(LabError, RuntimeError):
    """Horizon extension retries were exhausted for a path."""

    def __init__(self, message: str, seed: int) -> None:
        super().__init__(f"{message} (seed {seed})")
        self.seed = seed


class ConfigError(LabError, ValueError):
    """A scenario file could not be parsed or validated."""

    def __init__(
        self,
        message: str,
        field: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.field = field
        self.line = line
        self.column = column
