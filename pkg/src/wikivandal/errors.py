"""Exception hierarchy shared by all modules."""


class VandalError(Exception):
    """Base class for every error raised by this package."""


class DataError(VandalError):
    """Input data could not be used (bad file, bad record, degenerate set)."""


class MalformedXml(DataError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MissingField(DataError):
    pass


class BadHeader(DataError):
    pass


class BadRow(DataError):
    pass


class NotAnIp(DataError, ValueError):
    pass


class BitsOutOfRange(VandalError, ValueError):
    pass


class SingleClassData(DataError):
    pass


class DimensionMismatch(VandalError, ValueError):
    pass


class EmptyStream(DataError):
    pass


class NoPositives(DataError):
    pass


class NoNegatives(DataError):
    pass


class MissingRevisionId(DataError):
    pass


class BadField(DataError):
    pass


class IoFailure(DataError, OSError):
    pass


class BadModelFile(DataError):
    pass


class BindFailure(VandalError, OSError):
    pass


class ConnectionLost(VandalError):
    """The server went away mid-stream; ``partial`` holds what was answered."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial
