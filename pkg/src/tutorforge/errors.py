"""Exception taxonomy shared across the package.

Every error a caller is expected to handle has its own class; HTTP status
mapping lives in the service layer.
"""

from __future__ import annotations


class TutorforgeError(Exception):
    """Base class for all package errors."""


class MalformedDocument(TutorforgeError):
    """Input bytes are not a syntactically valid document."""


class SchemaViolation(TutorforgeError):
    """Document parsed but does not match the expected schema."""

    def __init__(self, path: str, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path
        self.detail = detail


class InvalidInput(TutorforgeError):
    """A caller violated an operation precondition."""


class ProviderFailure(TutorforgeError):
    """The completion provider failed after exhausting retries."""


class FixtureMiss(TutorforgeError):
    """Replay mode has no recorded response for this request."""

    def __init__(self, fingerprint: str, last_message_head: str):
        super().__init__(
            f"no fixture for fingerprint {fingerprint}; "
            f"last message starts: {last_message_head!r}"
        )
        self.fingerprint = fingerprint
        self.last_message_head = last_message_head


class UnparseableCompletion(TutorforgeError):
    """A completion could not be parsed into the expected structure."""


class InductionError(TutorforgeError):
    """A script-generation step failed; names the step and question."""

    def __init__(self, step: str, question_index: int | None, cause: Exception):
        where = f"step={step}"
        if question_index is not None:
            where += f" question_index={question_index}"
        super().__init__(f"script generation failed at {where}: {cause}")
        self.step = step
        self.question_index = question_index
        self.cause = cause


class SequenceConflict(TutorforgeError):
    """Appended event sequence number does not match the log length."""


class SessionClosed(SequenceConflict):
    """Append attempted after the session_end event."""


class StorageFailure(TutorforgeError):
    """The event log could not be durably written."""


class CorruptLog(TutorforgeError):
    """An event log violates a structural invariant."""

    def __init__(self, seq: int | None, detail: str):
        at = f"seq={seq}: " if seq is not None else ""
        super().__init__(f"{at}{detail}")
        self.seq = seq
        self.detail = detail


class SessionBusy(TutorforgeError):
    """Another turn is in flight for this session."""


class SessionComplete(TutorforgeError):
    """The session is not in a phase that accepts this input."""


class SessionIncomplete(TutorforgeError):
    """The session has not reached phase=done."""


class UnknownItem(TutorforgeError):
    """An answer references a post-test item that does not exist."""


class EmptyInput(TutorforgeError):
    """A statistic was requested over an empty value list."""


class DegenerateInput(TutorforgeError):
    """Group data cannot support the requested test."""


class DomainError(TutorforgeError):
    """Numeric argument outside the function domain."""
