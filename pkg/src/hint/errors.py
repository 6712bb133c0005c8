"""Exception hierarchy shared across the package.

CLI exit codes: DataError -> 3, ModelError -> 4, argparse usage errors -> 2.
"""


class HintError(Exception):
    """Base class for all package errors."""


class ConfigError(HintError):
    """Invalid configuration or layout annotation."""


class DataError(HintError):
    """Dataset content or shape problems."""


class FormatError(DataError):
    """On-disk container violations (bad magic, version, truncation)."""


class ModelError(HintError):
    """Checkpoint / model lifecycle problems."""


class DegenerateRotationError(HintError):
    """6D rotation input with zero or parallel columns."""


class DegenerateHeadingError(HintError):
    """Facing direction undefined (near vertical) with no prior frame to fall back on."""


class EncoderUnavailableError(HintError):
    """External text encoder adapter was requested but is not reachable."""


class SessionError(HintError):
    """Generation-session misuse (exhausted, unknown agent, over limits)."""
