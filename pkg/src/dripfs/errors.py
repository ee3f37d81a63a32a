"""Exception hierarchy. Each class carries a short ``code`` used by the CLI."""


class DripFSError(Exception):
    code = "ERROR"


class NotFound(DripFSError):
    code = "NOT_FOUND"


class Exists(DripFSError):
    code = "EXISTS"


class NotADirectory(DripFSError):
    code = "NOT_A_DIRECTORY"


class IsADirectory(DripFSError):
    code = "IS_DIRECTORY"


class BadOffset(DripFSError):
    code = "BAD_OFFSET"


class BadParams(DripFSError):
    code = "BAD_PARAMS"


class DupName(DripFSError):
    code = "DUP_NAME"


class Overfull(DripFSError):
    code = "OVERFULL"


class TableFull(DripFSError):
    code = "TABLE_FULL"


class AuthFail(DripFSError):
    code = "AUTH_FAIL"


class Unavailable(DripFSError):
    """Data referenced by a file entry is not (yet) present in the backend."""

    code = "IO"


class PartialFlush(DripFSError):
    code = "PARTIAL_FLUSH"


class NothingStaged(DripFSError):
    code = "NOTHING_STAGED"


class Locked(DripFSError):
    code = "LOCKED"


class MalformedTrace(DripFSError):
    code = "MALFORMED_TRACE"
