"""Exception taxonomy shared by every benq module.

The CLI maps any BenqError to exit code 1; argparse usage errors exit 2.
"""


class BenqError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BenqError):
    """Invalid or inconsistent configuration (bits, schedule, codebook mismatch)."""


class DataError(BenqError):
    """Input data violates a precondition (non-finite values, empty statistics)."""


class FormatError(BenqError):
    """Malformed, truncated, or corrupt file contents."""
