"""Exception types shared across the package."""


class AngioforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(AngioforgeError, ValueError):
    """Invalid configuration value or unparsable config text."""


class GridMismatch(AngioforgeError, ValueError):
    """Scalar fields or images with incompatible grids."""


class EmptyForest(AngioforgeError, ValueError):
    """Operation requires at least one vessel segment."""


class UndefinedMetric(AngioforgeError, ValueError):
    """Metric has no defined value for the given inputs."""


class MissingFile(AngioforgeError, FileNotFoundError):
    """Expected companion file is absent."""


class PgmError(AngioforgeError, ValueError):
    """Malformed PGM header or payload."""
