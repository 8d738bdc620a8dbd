"""Exception hierarchy shared by all arcdyn modules.

Every error carries a CLI exit category so the command-line runner can map
failures to stable exit codes without string matching.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4


class ArcdynError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_NUMERICAL


class ConfigError(ArcdynError):
    """Malformed or inconsistent run configuration."""

    exit_code = EXIT_CONFIG


class CoefficientError(ArcdynError):
    """Superposition coefficients violate |c0|^2 + |c1|^2 = 1."""

    exit_code = EXIT_VALIDATION


class MismatchError(ArcdynError):
    """Analytic and finite-difference NAC disagree (broken sign continuity
    or a grid too coarse for the requested tolerance)."""

    exit_code = EXIT_VALIDATION


class ConvergenceError(ArcdynError):
    """An iterative eigenvalue solve or propagator expansion stalled."""


class StabilityError(ArcdynError):
    """Per-step norm drift exceeded the scheme's bound."""


class LeakageError(ArcdynError):
    """Wavepacket amplitude at the grid boundary above tolerance."""

    exit_code = EXIT_VALIDATION


class ScheduleMismatch(ArcdynError):
    """Run records combined across inconsistent schedules or grids."""


class StencilError(ArcdynError):
    """Valid region narrower than the finite-difference stencil."""


class QuadratureError(ArcdynError):
    """Time quadrature failed its Richardson self-check."""


class InsufficientSeries(ArcdynError):
    """Fewer parameter values than required for an order-of-scaling fit."""

    exit_code = EXIT_CONFIG
