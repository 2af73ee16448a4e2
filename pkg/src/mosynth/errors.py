"""Exception hierarchy. Each family maps to a distinct CLI exit code."""


class MosynthError(Exception):
    exit_code = 1


class ConfigError(MosynthError, ValueError):
    """Invalid hyperparameters, part specs, constraints or job files."""

    exit_code = 2


class BVHParseError(MosynthError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateError(MosynthError, ArithmeticError):
    """Numerically degenerate input (parallel 6D axes, zero denominators)."""

    exit_code = 4
