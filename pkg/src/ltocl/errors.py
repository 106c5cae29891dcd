"""Exception hierarchy. ConfigError maps to CLI exit code 2, everything else to 1."""


class LtoclError(Exception):
    """Base class for all library errors."""


class ConfigError(LtoclError):
    """Invalid configuration value (bad rho, mismatched task split, ...)."""


class DimensionError(LtoclError):
    """Shape mismatch between operands."""


class DataError(LtoclError):
    """A data source cannot satisfy a request (insufficient samples, empty input)."""


class FormatError(LtoclError):
    """Malformed input file; message carries the byte offset where parsing failed."""


class LabelError(LtoclError):
    """A label refers to a class outside the currently seen set."""


class DegenerateBatchError(LtoclError):
    """Batch too small for the requested loss (fewer than two anchors)."""


class SinglePassError(LtoclError):
    """A single-pass task stream was consumed more than once."""
