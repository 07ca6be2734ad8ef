"""Exception hierarchy shared across the engine.

Every error carries a ``category`` used by the service layer to pick an
HTTP status and by the CLI to pick an exit code:

    usage    -> exit 2   (bad request shape, bad flags, bad target)
    parse    -> exit 3   (unparsable input data or query text)
    storage  -> exit 4   (I/O failures, corruption, capacity)
    busy     -> exit 5   (lock contention)
"""


class EngineError(Exception):
    category = "storage"


class UsageError(EngineError):
    category = "usage"


class ParseError(EngineError):
    """Unparsable input; ``line`` is 1-based when known."""

    category = "parse"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class StorageError(EngineError):
    category = "storage"


class CorruptDataError(StorageError):
    pass


class IdSpaceExhaustedError(StorageError):
    pass


class ValueTooLargeError(UsageError):
    pass


class WidthOverflowError(StorageError):
    pass


class EmptyTableError(UsageError):
    pass


class AbsentTermError(UsageError):
    pass


class InvalidOrderingError(UsageError):
    pass


class IndexOutOfRangeError(UsageError):
    pass


class BusyError(EngineError):
    category = "busy"
