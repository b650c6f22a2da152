"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: ConfigError -> 2, StorageError -> 3,
ValidationError (and subclasses) -> 4.
"""


class ShapeProbeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ShapeProbeError):
    """Contradictory or unusable run configuration."""


class StorageError(ShapeProbeError):
    """I/O failure; message names the offending path."""


class ValidationError(ShapeProbeError, ValueError):
    """Invalid argument values or violated preconditions."""


class GenerationError(ShapeProbeError):
    """Scene or polygon generation exhausted its retry budget."""


class PlacementError(GenerationError):
    """An object cannot be placed inside the canvas."""


class PartitionError(ValidationError):
    """Texture pool too small to partition as requested."""


class ProbeError(ValidationError):
    """A probing set cannot be derived from the given validation set."""


class MetricError(ValidationError):
    """Metric inputs are inconsistent (dimensions, missing baseline)."""


class OracleError(ValidationError):
    """Reference predictor cannot be fitted or applied."""
