"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the
command line can map them to different exit codes.
"""


class BlochMassError(Exception):
    """Base class for all package errors."""


class ConfigError(BlochMassError, ValueError):
    """Invalid or incomplete scenario / solver configuration."""


class NumericalError(BlochMassError, ArithmeticError):
    """A numerical precondition or convergence check failed."""


class DegeneracyError(NumericalError):
    """Two bands are (nearly) degenerate where first-order theory needs a gap."""


class PathResolutionError(NumericalError):
    """Adjacent points of a gauge chain are too far apart to be matched."""


class ResolutionError(NumericalError):
    """A quadrature or sampling grid failed its convergence check."""


class SizingError(ConfigError):
    """The simulation box cannot resolve the requested wavepacket."""
