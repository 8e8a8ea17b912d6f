"""mspex: partially explicit multiscale time stepping for nonlinear
parabolic problems with high-contrast diffusion."""

__version__ = "0.1.0"

from .exceptions import ConfigError, ConstraintRankError, ConvergenceError
from .grid import GridHierarchy, Patch, build_grids, oversample

__all__ = [
    "ConfigError",
    "ConstraintRankError",
    "ConvergenceError",
    "GridHierarchy",
    "Patch",
    "build_grids",
    "oversample",
    "__version__",
]
