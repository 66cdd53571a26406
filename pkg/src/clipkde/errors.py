"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`ClipKdeError` so
callers can catch one base type; the CLI maps subclasses to exit codes.
"""


class ClipKdeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ClipKdeError, ValueError):
    """Unsupported or inconsistent spatial dimension."""


class MomentOrderError(ClipKdeError, ValueError):
    """Requested moment order outside the supported range."""


class KernelConstructionError(ClipKdeError, ValueError):
    """A kernel spec failed its construction-time validation."""


class ClippingDomainError(ClipKdeError, ValueError):
    """Clipping function or scale evaluated outside its domain."""


class BandwidthError(ClipKdeError, ValueError):
    """Bandwidth outside the admissible range for the requested operation."""


class ScheduleError(ClipKdeError, ValueError):
    """Bandwidth schedule cannot be built for the given n, d, or mode."""


class ZeroScaleError(ClipKdeError, ZeroDivisionError):
    """Kernel argument undefined: zero local scale at zero separation."""


class RegionError(ClipKdeError, ValueError):
    """Evaluation region is invalid or empty."""


class UnknownIdError(ClipKdeError, KeyError):
    """Identifier not present in the relevant registry."""


class DensityRegistrationError(ClipKdeError, ValueError):
    """A density model failed its registration-time validation gates."""


class QuadratureError(ClipKdeError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class InsufficientDataError(ClipKdeError, ValueError):
    """Too few usable points for the requested fit."""


class ConfigError(ClipKdeError, ValueError):
    """Experiment configuration failed parsing or validation."""
