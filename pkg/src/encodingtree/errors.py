"""Exception hierarchy.

Every error carries a short machine-parsable ``code`` so the CLI can print a
single ``error=<code> message=...`` line.
"""


class EncodingTreeError(Exception):
    code = "error"


class ConfigError(EncodingTreeError, ValueError):
    code = "config_error"


class DimensionError(EncodingTreeError, ValueError):
    code = "dimension_error"


class InsufficientDataError(EncodingTreeError, ValueError):
    code = "insufficient_data"


class InvalidSubspaceSplit(EncodingTreeError, ValueError):
    code = "invalid_subspace_split"


class InvalidVectorError(EncodingTreeError, ValueError):
    code = "invalid_vector"


class InvalidCodeError(EncodingTreeError, ValueError):
    code = "invalid_code"


class EmptyDatasetError(EncodingTreeError, ValueError):
    code = "empty_dataset"


class PreconditionViolation(EncodingTreeError, ValueError):
    code = "precondition_violation"


class CorruptBufferError(EncodingTreeError, ValueError):
    code = "corrupt_buffer"


class MalformedFileError(EncodingTreeError, ValueError):
    code = "malformed_file"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EquivalenceError(EncodingTreeError, RuntimeError):
    """Raised when an accelerated method disagrees with the ADC oracle."""

    code = "equivalence_failure"
