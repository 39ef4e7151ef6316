"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for bad arguments; the classes here mark
conditions the CLI maps to distinct exit codes.
"""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(Exception):
    """Missing, malformed or mismatched data artifacts (CLI exit code 3)."""


class NumericError(Exception):
    """Non-finite values or failed numerical procedures (CLI exit code 4)."""
