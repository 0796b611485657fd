"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError and its
subclasses -> 2, NumericError -> 3.
"""


class MalnError(Exception):
    pass


class ConfigError(MalnError):
    """Invalid configuration: bad widths, unknown keys, out-of-range values."""


class DimensionError(MalnError):
    """Operand shapes are incompatible; the message names both shapes."""


class DataError(MalnError):
    """Dataset-level problem: misaligned rows, bad labels, missing files."""


class ParseError(DataError):
    """Malformed file; the message carries the offending position."""


class MiningError(DataError):
    """No valid triplet exists anywhere in the dataset."""


class NumericError(MalnError):
    """Non-finite values encountered during optimization."""
