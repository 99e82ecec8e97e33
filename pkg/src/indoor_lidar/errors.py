"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class PreconditionError(RuntimeError):
    """An input has not been validated (e.g. a scene with violations)."""


class ConsistencyError(ValueError):
    """Two inputs that should describe the same state disagree."""


class ParseError(ValueError):
    """Malformed text input. ``line`` and ``field`` are 1-based when known."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class TaxonomyError(ParseError):
    """A class label outside the configured taxonomy."""


class StorageError(OSError):
    """I/O failure while reading or writing dataset artifacts."""


class CorruptFileError(StorageError):
    """File contents do not match the expected binary layout."""


class ValidationError(ValueError):
    """Decoded data fails a content check (e.g. non-finite values)."""


class ConflictError(StorageError):
    """A write would overwrite an existing record."""
