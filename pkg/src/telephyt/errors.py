"""Exception hierarchy shared across the package.

``TelephytError`` is the base for everything raised on bad data or bad
protocol input, so callers (and the CLI exit-code mapping) can catch one
type.  Programming errors still surface as ordinary ``ValueError`` /
``TypeError``.
"""


class TelephytError(Exception):
    """Base class for all data and protocol errors."""


class DecodeError(TelephytError):
    """Malformed wire payload (frame packet or control message)."""


class RecordingFormatError(TelephytError):
    """Malformed or inconsistent recording file."""


class AnalysisError(TelephytError):
    """Stream or series unusable for kinematic analysis."""


class StatsError(TelephytError):
    """Statistical test preconditions violated (too small, degenerate)."""


class HubError(TelephytError):
    """Session-hub operation rejected (role occupied, capacity, ...)."""
