"""Behavior events: the append-only record every session is folded from."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import MalformedDocument, SchemaViolation

EVENT_KINDS = (
    "session_start",
    "learner_message",
    "agent_message",
    "help_request",
    "scroll",
    "question_advance",
    "forced_advance",
    "posttest_answer",
    "survey_answer",
    "session_end",
)


@dataclass(frozen=True)
class BehaviorEvent:
    seq: int
    session_id: str
    kind: str
    timestamp: int  # UTC milliseconds
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise SchemaViolation("/kind", f"unknown event kind {self.kind!r}")


def event_to_line(event: BehaviorEvent) -> str:
    """One canonical NDJSON line, newline-terminated."""
    doc = {
        "seq": event.seq,
        "session_id": event.session_id,
        "kind": event.kind,
        "timestamp": event.timestamp,
        "payload": event.payload,
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def event_from_line(line: str) -> BehaviorEvent:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"bad event line: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("/", "event line must be an object")
    for key, kind in (("seq", int), ("session_id", str), ("kind", str),
                      ("timestamp", int), ("payload", dict)):
        if key not in doc:
            raise SchemaViolation(f"/{key}", "missing field")
        if not isinstance(doc[key], kind):
            raise SchemaViolation(f"/{key}", f"expected {kind.__name__}")
    return BehaviorEvent(
        seq=doc["seq"],
        session_id=doc["session_id"],
        kind=doc["kind"],
        timestamp=doc["timestamp"],
        payload=doc["payload"],
    )
