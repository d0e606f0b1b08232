"""Exception hierarchy shared across the package.

Every error a caller can act on gets its own class; generic failures reuse
the closest parent. ``SentembError`` is the common root so the CLI can map
library failures to exit codes without enumerating subclasses.
"""


class SentembError(Exception):
    """Root of all library-raised errors."""


class ShapeError(SentembError):
    """Operand shapes are incompatible for the requested operation."""


class ParameterError(SentembError):
    """A numeric argument is outside its valid range (e.g. temperature <= 0)."""


class DegenerateInputError(SentembError):
    """Input is valid in shape but degenerate in value (zero vector, empty mask)."""


class NumericError(SentembError):
    """A computation produced NaN or otherwise left the finite domain."""


class ContractError(SentembError):
    """An API precondition was violated by the caller."""


class ConfigError(SentembError):
    """A configuration value or combination of values is invalid."""


class LengthError(SentembError):
    """A token sequence exceeds the model's maximum length."""


class ParseError(SentembError):
    """A data file could not be parsed; message carries the line number."""


class CheckpointError(SentembError):
    """Base class for checkpoint load failures."""


class NotACheckpointError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class TruncatedCheckpointError(CheckpointError):
    """Checkpoint file ended before all declared content was read."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor's shape disagrees with the expected configuration."""


class CapacityError(SentembError):
    """The host ran out of memory for the requested model or batch."""
