"""Exception hierarchy shared across the package."""


class MomentKitError(Exception):
    """Base class for all errors raised by this package."""


class AnnotationParseError(MomentKitError):
    """A JSONL annotation line could not be decoded."""

    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class ValidationError(MomentKitError):
    """A record violates a data-model invariant."""

    def __init__(self, reason, query_id=None, field=None):
        self.query_id = query_id
        self.field = field
        prefix = ""
        if query_id is not None:
            prefix += f"query {query_id}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + reason)


class FeatureFormatError(MomentKitError):
    """A feature file has a bad magic or malformed header."""


class FeatureLengthError(MomentKitError):
    """A feature file payload does not match its declared shape."""

    def __init__(self, path, expected_bytes, actual_bytes):
        self.path = str(path)
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(
            f"{self.path}: payload length mismatch, expected {expected_bytes} bytes, "
            f"got {actual_bytes} bytes"
        )


class ConfigError(MomentKitError):
    """A YAML config is missing keys, has unknown keys, or bad types."""


class CheckpointError(MomentKitError):
    """A checkpoint file is unreadable or incompatible."""


class ShapeError(MomentKitError):
    """Tensor shapes do not match the declared contract."""


class SessionStateError(MomentKitError):
    """A predictor session method was called in the wrong state."""
