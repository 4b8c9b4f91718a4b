"""Exception types shared across the package."""

from __future__ import annotations


class TmkError(Exception):
    """Base class for self-model document problems."""


class ModelSyntaxError(TmkError):
    """The document is not syntactically valid; carries the position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(TmkError):
    """A required field is missing or a field has the wrong shape."""


class DuplicateIdError(TmkError):
    """The same identifier is declared more than once."""


class DanglingReferenceError(TmkError):
    """An identifier is referenced but never declared."""


class CycleError(TmkError):
    """The task decomposition contains a cycle."""


class ProviderError(Exception):
    """Base class for chat-completion provider failures."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class AuthError(ProviderError):
    """The endpoint rejected our credentials; never retried."""


class RetryExhaustedError(ProviderError):
    """Transient failures persisted beyond the retry budget."""


class MalformedResponseError(ProviderError):
    """The endpoint answered 200 with a body we cannot use."""


class PipelineError(Exception):
    """A provider failure surfaced through the explanation pipeline."""

    def __init__(self, message: str, trace_id: str, cause: Exception | None = None):
        super().__init__(message)
        self.trace_id = trace_id
        self.cause = cause


class ConfigError(Exception):
    """Service or CLI configuration is unusable."""
