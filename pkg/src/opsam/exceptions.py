"""Error hierarchy for the package.

Numeric precondition violations raise plain ``ValueError``; everything that
crosses a subsystem boundary (config files, model backends, the wire
protocol) gets a dedicated class so the CLI can map failures to exit codes.
"""


class OpsamError(Exception):
    """Base class for package-specific failures."""


class ConfigError(OpsamError):
    """Invalid or inconsistent run configuration (CLI exit code 1)."""


class BackendError(OpsamError):
    """An encoder or segmenter backend failed (CLI exit code 2)."""


class TransportError(BackendError):
    """The remote backend could not be reached."""


class ProtocolError(BackendError):
    """The remote backend rejected a request or answered with an error."""


class ProtocolMismatchError(ProtocolError):
    """Client and server disagree on the wire protocol version."""


class PayloadShapeError(BackendError):
    """A remote payload decoded to the wrong shape, dtype, or range."""
