"""Exception types shared across the package."""


class CRTRecordsError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CRTRecordsError, ValueError):
    pass


class StructuralError(CRTRecordsError, ValueError):
    """Malformed tree, bad vertex id or a point that does not sit on the tree."""


class DegenerateInputError(CRTRecordsError, ValueError):
    pass


class DomainError(CRTRecordsError, ValueError):
    pass


class SingularInputError(CRTRecordsError, ValueError):
    pass


class IncompleteEventsError(CRTRecordsError, RuntimeError):
    """Raised when some mass has not been separated from the root yet.

    The remedy is to grow the mark horizon and call again.
    """


class QuadratureError(CRTRecordsError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
