"""Exception types shared across the solver stack."""


class SolverError(RuntimeError):
    """Unrecoverable numerical failure (scheme violation, bad inputs)."""


class ConvergenceError(SolverError):
    """An iteration ran out of steps; carries the last residual seen."""

    def __init__(self, message: str, residual: float = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, out-of-range value)."""
