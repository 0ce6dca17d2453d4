class EgapError(Exception):
    """Base class for every error raised by this package."""


class FormatError(EgapError, ValueError):
    """A file or container could not be parsed.

    ``chunk`` names the section being read and ``offset`` the byte position
    where parsing failed.
    """

    def __init__(self, message, chunk=None, offset=None):
        self.chunk = chunk
        self.offset = offset
        where = []
        if chunk is not None:
            where.append(f"chunk {chunk}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SupportError(EgapError, ValueError):
    """A symbol falls outside the support of the table it is coded with."""


class CorruptStreamError(EgapError):
    """The range decoder ran out of bytes or hit an impossible state."""
