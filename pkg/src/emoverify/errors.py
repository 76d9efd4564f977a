"""Shared exception types."""


class EmoverifyError(Exception):
    """Base class for toolkit-specific failures."""


class ManifestError(EmoverifyError):
    """Raised when a corpus manifest fails to parse or validate."""


class FormatError(EmoverifyError):
    """Raised when a binary or audio file does not match its declared format."""
