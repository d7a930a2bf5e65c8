"""Exception types raised across the package."""


class ConvGemmError(Exception):
    pass


class InvalidGeometry(ConvGemmError, ValueError):
    """Convolution extents that cannot produce an output of at least 1x1."""


class DimensionMismatch(ConvGemmError, ValueError):
    """Operand shapes do not agree for C += A.B."""


class AllocationFailure(ConvGemmError, MemoryError):
    """A workspace buffer could not be allocated."""

    def __init__(self, nbytes, limit=None, what="buffer"):
        self.nbytes = nbytes
        self.limit = limit
        msg = f"cannot allocate {nbytes} bytes for {what}"
        if limit is not None:
            msg += f" (limit {limit} bytes)"
        super().__init__(msg)


class ParseError(ConvGemmError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnknownLayerKind(ParseError):
    pass
