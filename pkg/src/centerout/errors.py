"""Exception hierarchy shared by all modules."""


class CenterOutError(Exception):
    """Base class for library errors."""


class InvalidArgument(CenterOutError, ValueError):
    pass


class OutOfDomain(CenterOutError, ValueError):
    pass


class NumericError(CenterOutError, ArithmeticError):
    pass


class ConvergenceFailure(NumericError):
    """Iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, last_error, iterations):
        super().__init__(message)
        self.last_error = last_error
        self.iterations = iterations


class UnsupportedPlanKind(CenterOutError, TypeError):
    pass


class Unsupported(CenterOutError, ValueError):
    pass


class ParseError(CenterOutError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(CenterOutError, ValueError):
    pass
