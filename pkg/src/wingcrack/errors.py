"""Exception hierarchy shared by all subpackages."""


class WingcrackError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(WingcrackError):
    """Invalid or degenerate geometry (meshing, remeshing, fracture growth)."""


class LinearSolverError(WingcrackError):
    """Singular or otherwise unsolvable linear system."""


class NonConvergenceError(WingcrackError):
    """Newton iteration did not reach the residual tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class PropagationError(WingcrackError):
    """Runaway or otherwise invalid micro-scale propagation."""


class ConfigError(WingcrackError):
    """Invalid scenario configuration."""
