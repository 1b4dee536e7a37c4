"""Exception hierarchy shared by all spdc_lab modules."""

from __future__ import annotations


class SpdcLabError(Exception):
    """Base class for every error raised by spdc_lab."""


class RangeError(SpdcLabError, ValueError):
    """Wavelength or temperature outside a Sellmeier set's validity window."""


class NoPhaseMatchError(SpdcLabError):
    """No sign change of the collinear mismatch inside the search window."""


class NotPhaseMatchableError(SpdcLabError):
    """Requested signal wavelength has no real noncollinear solution."""


class DegenerateInputError(SpdcLabError, ValueError):
    pass


class DegenerateSettingsError(SpdcLabError):
    pass


class MalformedScanError(SpdcLabError, ValueError):
    pass


class FitError(SpdcLabError):
    """Least-squares fit failed; ``diagnostics`` carries residual information."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnboundedBandwidthError(SpdcLabError, ValueError):
    pass


class ConfigurationError(SpdcLabError, ValueError):
    pass


class InvalidOffsetError(SpdcLabError, ValueError):
    pass


class InsufficientStatisticsError(SpdcLabError):
    pass
