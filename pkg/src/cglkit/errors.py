"""Exception types shared across the toolkit."""


class CglkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CglkitError):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(CglkitError):
    """Input data violates a structural invariant."""


class ConfigError(CglkitError):
    """Configuration value out of range or inconsistent."""


class GenerationError(CglkitError):
    """Synthetic generator could not satisfy its config."""


class UndefinedMetricError(CglkitError):
    """Requested quantity is undefined for the given inputs."""


class TrainingError(CglkitError):
    """Optimization produced non-finite values."""


class StateError(CglkitError):
    """Continual-learning state missing or inconsistent for the requested step."""
