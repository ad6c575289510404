"""Exception types shared across the package.  The CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid parameters or incompatible options."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotPositiveDefiniteError(SolverError):
    """Conjugate gradients met a direction of non-positive curvature."""


class EmptyRegionError(ConfigError):
    """The admissible region for stripe centres is empty."""
