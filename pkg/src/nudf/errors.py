"""Exception hierarchy shared by all pipeline stages."""


class NudfError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 2


class FormatError(NudfError):
    """A file could not be parsed (bad magic, malformed record, ...)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncatedFileError(FormatError):
    pass


class EmptyInputError(NudfError):
    pass


class NumericalError(NudfError):
    """NaN loss, diverging optimisation and similar numerical failures."""

    exit_code = 3


class ReconstructionError(NumericalError):
    pass


class EmptyFieldError(NumericalError):
    """Extraction accepted no point: the field has no near-zero set in its domain."""


class DegenerateTriangleWarning(UserWarning):
    def __init__(self, count):
        super().__init__(f"dropped {count} degenerate triangle(s)")
        self.count = count
