"""Exception types shared across the pipeline."""


class PSMError(Exception):
    """Base class for every error raised by psmdetect."""


class ParameterError(PSMError, ValueError):
    """A parameter is outside its allowed range."""


class MalformedRecordError(PSMError, ValueError):
    """An input line could not be turned into an action record."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class GenerationError(PSMError):
    """A synthetic configuration cannot be realised."""


class InvariantError(PSMError):
    """An internal consistency check failed."""


class SchemaError(PSMError, ValueError):
    """A file produced by another command has an unexpected layout or version."""
