"""Exception hierarchy shared by every module in the package."""


class PeakedError(Exception):
    """Base class for all package errors."""


class InvalidArgument(PeakedError, ValueError):
    pass


class MalformedBlock(PeakedError, ValueError):
    pass


class UnsupportedLayout(PeakedError, ValueError):
    pass


class ResourceLimit(PeakedError):
    """Requested size exceeds a configured cap (dense qubit count, etc.)."""


class ParseError(PeakedError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsupportedGate(PeakedError, ValueError):
    def __init__(self, name: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported gate {name!r}{where}")
        self.name = name
        self.line = line


class SynthesisFailure(PeakedError):
    def __init__(self, message: str, block_index: int | None = None, seed=None):
        super().__init__(message)
        self.block_index = block_index
        self.seed = seed


class ReductionFailure(PeakedError):
    pass
