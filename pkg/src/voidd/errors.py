"""Exception types shared across the pipeline."""


class ValidationError(ValueError):
    """Input data violates a documented invariant; names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FormatError(ValueError):
    """Malformed file content; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class DegenerateGeometryError(ValueError):
    """Geometric input collapses to a point or otherwise has no defined answer."""


class DegenerateSkeletonError(ValueError):
    """Skeleton is a closed loop with no endpoints; no open centerline exists."""
