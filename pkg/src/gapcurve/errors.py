"""Exception types; each carries the CLI exit code it maps to."""


class GapcurveError(Exception):
    exit_code = 1


class DomainError(GapcurveError, ValueError):
    """Input outside the mathematical domain (open curve, excluded potential, ...)."""
    exit_code = 1


class ParseError(GapcurveError, ValueError):
    exit_code = 2

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ResolutionError(GapcurveError):
    """The grid cannot resolve the request (lambda too large, zero count mismatch)."""
    exit_code = 3


class DivergenceError(GapcurveError):
    exit_code = 4

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class MultiplicityError(GapcurveError):
    """A variation formula was asked for at a multiple zero."""
    exit_code = 3
