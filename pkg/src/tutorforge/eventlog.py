"""Append-only event persistence: one NDJSON file per session.

Events are flushed and fsynced before the caller's API response goes out,
so any prefix of appends rehydrates to a valid session state. Files are
never rewritten.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Sequence

from .engine import SessionState, fold_session
from .errors import CorruptLog, SequenceConflict, SessionClosed, StorageFailure
from .events import BehaviorEvent, event_from_line, event_to_line


class EventLog:
    """Event files for every session under one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        # session_id -> (event count, closed flag); lazily loaded from disk
        self._index: dict[str, tuple[int, bool]] = {}

    def _path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.ndjson"

    def _load_index(self, session_id: str) -> tuple[int, bool]:
        cached = self._index.get(session_id)
        if cached is not None:
            return cached
        path = self._path(session_id)
        count, closed = 0, False
        if path.exists():
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    count += 1
                    closed = '"kind":"session_end"' in line
        self._index[session_id] = (count, closed)
        return count, closed

    def append_event(self, event: BehaviorEvent) -> None:
        """Durably append one event; the caller supplies the next seq."""
        with self._lock:
            count, closed = self._load_index(event.session_id)
            if closed:
                raise SessionClosed(f"session {event.session_id} is closed")
            if event.seq != count:
                raise SequenceConflict(
                    f"expected seq {count}, got {event.seq} for session {event.session_id}"
                )
            line = event_to_line(event)
            try:
                with self._path(event.session_id).open("a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                self._index.pop(event.session_id, None)
                raise StorageFailure(f"could not append event: {exc}") from exc
            self._index[event.session_id] = (count + 1, event.kind == "session_end")

    def read_events(self, session_id: str) -> list[BehaviorEvent]:
        path = self._path(session_id)
        if not path.exists():
            return []
        events = []
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    events.append(event_from_line(line))
        return events

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.ndjson"))


def rehydrate_session(events: Sequence[BehaviorEvent]) -> SessionState:
    """Pure left-fold of an event sequence into a session state.

    Equal logs yield equal states; any live-session prefix rehydrates to
    exactly the state the service was holding at that point.
    """
    if not events:
        raise CorruptLog(None, "empty log")
    return fold_session(events)
