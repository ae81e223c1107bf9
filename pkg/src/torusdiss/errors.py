"""Exception types shared across the toolkit."""


class TorusDissError(Exception):
    pass


class DimensionError(TorusDissError):
    """Grid/operator/vector shape mismatch."""


class ConfigurationError(TorusDissError):
    """Invalid or incomplete configuration (CLI exit code 2)."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"[{field}] {message}")


class NumericalFailure(TorusDissError):
    """An iterative routine failed to converge (CLI exit code 3)."""


class BoundViolation(TorusDissError):
    """A proven bound failed on computed data (CLI exit code 4)."""


class UnsupportedError(TorusDissError):
    """Requested computation lies outside the implemented surface."""
