"""Exception hierarchy shared by all hyperfuse modules.

Two failure classes matter at the CLI boundary: problems with input files
(missing, truncated, malformed) and violations of domain invariants
(bad dimensions, negative values, inconsistent configs). They map to
distinct process exit codes.
"""


class HyperfuseError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HyperfuseError):
    """An input file is missing, truncated, or malformed (CLI exit code 2)."""


class ValidationError(HyperfuseError):
    """A domain invariant or precondition is violated (CLI exit code 3)."""
