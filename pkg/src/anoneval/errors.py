"""Exception hierarchy shared across the engine.

Data and validation problems derive from ValidationError (CLI exit code 2),
backend process failures from BackendError (CLI exit code 3).
"""


class ValidationError(ValueError):
    """Input data violates a schema, invariant or precondition."""


class StreamError(ValidationError):
    """Problem in a face-stream file, with 1-based line context."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(StreamError):
    """Missing required field, wrong cardinality, bad value or vocabulary."""


class FrameOrderError(StreamError):
    """frame_idx decreased between consecutive records."""


class RoleMismatchError(StreamError):
    """Stream header declares a different role than expected."""


class PairingError(ValidationError):
    """Original/anonymized streams cannot be paired (id or length mismatch)."""


class DegenerateGeometryError(ValidationError):
    """Geometric input is degenerate (collinear points, zero baseline, ...)."""


class UnanonymizableVideoError(ValidationError):
    """No frame of the video contains a detected face."""


class TemplateError(ValidationError):
    """Backend command template is malformed (unknown or missing placeholder)."""

    def __init__(self, message, placeholder=None):
        self.placeholder = placeholder
        super().__init__(message)


class BackendError(RuntimeError):
    """An external backend stage failed (nonzero exit or missing output)."""

    def __init__(self, message, stage=None, record=None):
        self.stage = stage
        self.record = record
        super().__init__(message)
