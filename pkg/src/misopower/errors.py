"""Exception types raised across the package."""


class MisoPowerError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(MisoPowerError, ValueError):
    pass


class DegenerateChannelError(MisoPowerError, ValueError):
    pass


class InvalidPowerError(MisoPowerError, ValueError):
    pass


class DomainError(MisoPowerError, ValueError):
    """An oracle was evaluated outside its scale-parameter domain."""


class CenteringError(MisoPowerError, RuntimeError):
    """Damped Newton failed to reach an approximate tau-center.

    The best iterate seen is kept on ``best_point``.
    """

    def __init__(self, message, best_point=None):
        super().__init__(message)
        self.best_point = best_point


class DegeneratePolytopeError(MisoPowerError, RuntimeError):
    pass


class ProtectedRowError(MisoPowerError, ValueError):
    pass


class ConfigError(MisoPowerError, ValueError):
    """Malformed experiment or scenario document."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f" (key '{key}'"
            where += f", line {line})" if line is not None else ")"
        super().__init__(message + where)
        self.key = key
        self.line = line


class StaleSolutionError(MisoPowerError, ValueError):
    pass
