"""Exception hierarchy shared by every layer of the engine."""


class SpdzError(Exception):
    """Base class for all engine errors."""


class FieldMismatchError(SpdzError, ValueError):
    """Operands live in different fields or sessions."""


class PreprocessingExhausted(SpdzError):
    """A party ran out of triples, squares, random bits or input masks."""


class BundleFormatError(SpdzError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TransportError(SpdzError):
    """The channel failed: peer gone, timeout, reset."""


class FramingError(TransportError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MacCheckFailed(SpdzError):
    """The terminal MAC check detected tampering. The session is poisoned."""


class SessionAborted(SpdzError):
    """An operation was attempted on a session that already aborted."""


class RangeFitError(SpdzError, ValueError):
    """Comparison operands could reach p/2 for the declared parameters."""


class TemplateError(SpdzError, ValueError):
    pass
