"""Exception hierarchy shared across the package.

The split mirrors the CLI exit codes: usage errors (bad arguments or config)
exit 1, data errors (malformed or inconsistent inputs) exit 2, anything else
exits 3.
"""


class CascadeError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(CascadeError):
    """Caller misuse: bad arguments, unknown method, unparsable config."""


class DataError(CascadeError):
    """Invalid input data: malformed records, shape mismatches, missing fields."""
