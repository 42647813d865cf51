"""Exception hierarchy shared across the package.

The CLI maps any ``CosmoError`` to exit code 1; argparse usage errors exit 2.
"""


class CosmoError(Exception):
    """Base class for data, format, and model errors raised by this package."""


class FormatError(CosmoError):
    """Raised when a binary store, checkpoint, or record file is malformed."""


class ValidationError(CosmoError):
    """Raised when inputs violate a documented precondition or invariant."""


class TrainingDivergedError(CosmoError):
    """Raised when the training loss becomes non-finite."""
