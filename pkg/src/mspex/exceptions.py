class ConfigError(ValueError):
    """Invalid user-facing configuration (grid sizes, files, preset names)."""


class ConvergenceError(RuntimeError):
    """A linear or nonlinear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConstraintRankError(RuntimeError):
    """A constraint block in a saddle system is rank deficient."""
