"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ConfigError (and argparse usage
errors) exit 2, every other IarnError exits 1.
"""


class IarnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(IarnError):
    """Shapes or lengths of two operands do not line up."""


class ConfigError(IarnError):
    """A configuration value or combination of values is invalid."""


class NumericError(IarnError):
    """A computation produced or received a non-finite value."""


class ParseError(IarnError):
    """A CSV source could not be parsed; the message cites the line."""


class SchemaError(IarnError):
    """A model file does not match the expected document layout."""


class VersionError(IarnError):
    """A model file declares an unsupported format version."""


class UndefinedMetricError(IarnError):
    """A metric is mathematically undefined for the given inputs."""
