"""Shared exception types."""


class ConfigError(Exception):
    """A config file could not be parsed or referenced something invalid."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = path if line is None else f"{path}:{line}"
            prefix += ": "
        super().__init__(prefix + message)


class ValidationError(Exception):
    """A loaded artifact failed validation and was refused."""

    def __init__(self, message: str, report: list[str] | None = None):
        self.report = report or []
        super().__init__(message)


class InfeasibleInputError(RuntimeError):
    """An applied input vector drove the plant state out of its domain.

    Raised by the occupancy model when a step would leave a node count
    outside {0, 1}; this always indicates a controller bug.
    """


class OracleViolationError(RuntimeError):
    """A simulated step failed the independent occupancy-model cross-check.

    Carries a message identifying the step, node, and violated rule; the
    simulation driver aborts rather than continue from an inconsistent state.
    """
