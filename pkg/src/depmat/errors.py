"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates an operation's contract."""


class NumericalError(RuntimeError):
    """An iterative routine failed to converge.

    Carries the final residual so callers can judge how badly it failed.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class VacuousBoundError(RuntimeError):
    """A run was refused because its bound certifies nothing (failure probability >= 1)."""
