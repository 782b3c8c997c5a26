"""Exception hierarchy shared by every module of the package."""


class VstpError(Exception):
    """Base class for all errors raised by vstp."""


class DomainError(VstpError, ValueError):
    """A numeric argument lies outside its valid domain."""


class ConfigError(VstpError, ValueError):
    """Invalid configuration (vocabulary, model, sampler or CLI settings)."""


class DecodeError(VstpError, ValueError):
    """A token id or token string cannot be mapped back."""


class SchemaError(VstpError, ValueError):
    """An entity label is missing from the vocabulary schema."""


class LabelError(VstpError, ValueError):
    """Hierarchy labels (line/paragraph ids) are inconsistent."""


class TruncationError(VstpError, ValueError):
    """A sequence does not fit into the decoder's maximum length.

    ``fit`` holds how many items (instances, characters) would fit.
    """

    def __init__(self, message, fit=0):
        super().__init__(message)
        self.fit = fit


class TableError(VstpError, ValueError):
    """Table HTML or grid violates the supported subset.

    ``position`` is a ``(line, column)`` pair when known.
    """

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (line {position[0]}, col {position[1]})"
        super().__init__(message)
        self.position = position


class AssemblyError(VstpError, ValueError):
    """Cell texts do not line up with the table structure."""


class GenerationError(VstpError, RuntimeError):
    """Synthetic sample generation gave up after bounded retries."""


class NumericError(VstpError, FloatingPointError):
    """Non-finite values reached a loss or a training step."""


class TrainingError(VstpError, RuntimeError):
    """Training diverged."""
