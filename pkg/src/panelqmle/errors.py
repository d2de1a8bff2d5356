"""Exception types shared across the package."""


class PanelQmleError(Exception):
    """Base class for all package errors."""


class ConfigError(PanelQmleError):
    """Invalid or incomplete configuration input."""


class DegenerateDataError(PanelQmleError):
    """Data carries no usable variation (e.g. zero cross-section variance)."""


class NumericDegeneracyError(PanelQmleError):
    """Ill-conditioned or singular matrix on the main computational path."""


class NonConvergenceError(PanelQmleError):
    """An iterative routine failed to reach its stopping rule."""
