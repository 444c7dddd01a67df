"""HTTP + WebSocket session service over the dialogue engine.

One append-only event file per session; the in-memory state is always the
fold of that file. Mutating endpoints hold a per-session turn lock (a busy
session answers 409) and push agent messages over the stream socket in the
exact order the turn manager emitted them.
"""

from __future__ import annotations

import asyncio
import secrets
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import engine
from .engine import ChatMessage, SessionState
from .errors import (
    FixtureMiss,
    InvalidInput,
    ProviderFailure,
    SequenceConflict,
    SessionBusy,
    SessionComplete,
    TutorforgeError,
    UnknownItem,
)
from .events import BehaviorEvent
from .eventlog import EventLog, rehydrate_session
from .gateway import Gateway
from .model import LessonText, TutoringScript, lesson_to_doc
from .study import (
    CHATBOT_ONLY_ASPECTS,
    LIKERT_MAX,
    LIKERT_MIN,
    PostTest,
    SurveyInstrument,
    assign_condition,
    load_posttest,
    load_survey,
)
from .templates import TemplateSet

DEFAULT_SEED = 7241


@dataclass
class ContentStore:
    """Lessons, scripts, and instruments the service can hand out."""

    lessons: dict[str, LessonText] = field(default_factory=dict)
    scripts: dict[str, TutoringScript] = field(default_factory=dict)
    default_scripts: dict[str, str] = field(default_factory=dict)  # condition -> script_id
    posttest: PostTest = field(default_factory=load_posttest)
    survey: SurveyInstrument = field(default_factory=load_survey)

    def add_lesson(self, lesson: LessonText) -> None:
        self.lessons[lesson.lesson_id] = lesson

    def add_script(self, script: TutoringScript, default_for: tuple[str, ...] = ()) -> None:
        self.scripts[script.script_id] = script
        for condition in default_for:
            self.default_scripts[condition] = script.script_id

    def script_for(self, condition: str, script_id: str | None) -> TutoringScript | None:
        if condition == "reading":
            return None
        if script_id is not None:
            if script_id not in self.scripts:
                raise InvalidInput(f"unknown script {script_id!r}")
            return self.scripts[script_id]
        default_id = self.default_scripts.get(condition)
        if default_id is None:
            raise InvalidInput(f"no script registered for condition {condition!r}")
        return self.scripts[default_id]


class SessionHub:
    """Fan-out of stream frames from worker threads to websocket tasks."""

    def __init__(self):
        self._subscribers: dict[str, list[tuple[asyncio.AbstractEventLoop, asyncio.Queue]]] = {}
        self._lock = threading.Lock()

    def subscribe(self, session_id: str) -> asyncio.Queue:
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()
        with self._lock:
            self._subscribers.setdefault(session_id, []).append((loop, queue))
        return queue

    def unsubscribe(self, session_id: str, queue: asyncio.Queue) -> None:
        with self._lock:
            subs = self._subscribers.get(session_id, [])
            self._subscribers[session_id] = [(l, q) for l, q in subs if q is not queue]

    def publish(self, session_id: str, frame: dict) -> None:
        with self._lock:
            subs = list(self._subscribers.get(session_id, []))
        for loop, queue in subs:
            loop.call_soon_threadsafe(queue.put_nowait, frame)


def _message_dict(message: ChatMessage) -> dict:
    return {
        "turn_id": message.turn_id,
        "author": message.author,
        "content": message.content,
        "cause": message.cause,
        "timestamp": message.timestamp,
    }


class CreateSessionBody(BaseModel):
    participant_id: str
    lesson_id: str
    condition: str | None = None
    script_id: str | None = None


class MessageBody(BaseModel):
    text: str


class TelemetryBody(BaseModel):
    kind: str
    payload: dict


class PosttestBody(BaseModel):
    answers: dict[str, int]


class SurveyBody(BaseModel):
    responses: dict[str, int]


@contextmanager
def _api_errors():
    try:
        yield
    except SessionBusy as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except (SessionComplete, SequenceConflict) as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except (InvalidInput, UnknownItem) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except (ProviderFailure, FixtureMiss) as exc:
        raise HTTPException(status_code=502, detail=str(exc)) from exc
    except TutorforgeError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


def create_app(
    store: ContentStore,
    gateway: Gateway,
    data_dir: str | Path,
    *,
    seed: int = DEFAULT_SEED,
    clock: Callable[[], int] | None = None,
    templates: TemplateSet | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    clock = clock or (lambda: int(time.time() * 1000))
    log = EventLog(data_dir)
    hub = SessionHub()
    app = FastAPI(title="tutorforge session service")

    states: dict[str, SessionState] = {}
    turn_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def get_state(session_id: str) -> SessionState:
        state = states.get(session_id)
        if state is None:
            events = log.read_events(session_id)
            if not events:
                raise HTTPException(status_code=404, detail="unknown session")
            state = rehydrate_session(events)
            states[session_id] = state
        return state

    def turn_lock(session_id: str) -> threading.Lock:
        with locks_guard:
            lock = turn_locks.get(session_id)
            if lock is None:
                lock = threading.Lock()
                turn_locks[session_id] = lock
            return lock

    @contextmanager
    def exclusive_turn(session_id: str):
        lock = turn_lock(session_id)
        if not lock.acquire(blocking=False):
            raise SessionBusy(f"session {session_id} has a turn in flight")
        try:
            yield
        finally:
            lock.release()

    def commit(state_before: SessionState, result_state: SessionState,
               events: tuple[BehaviorEvent, ...],
               messages: tuple[ChatMessage, ...]) -> None:
        for event in events:
            log.append_event(event)
        states[result_state.session_id] = result_state
        for message in messages:
            hub.publish(result_state.session_id, {"type": "message",
                                                  "message": _message_dict(message)})
        if result_state.phase != state_before.phase:
            hub.publish(result_state.session_id, {"type": "phase",
                                                  "phase": result_state.phase})

    def session_view(state: SessionState) -> dict:
        question = state.current_question()
        view = {
            "session_id": state.session_id,
            "participant_id": state.participant_id,
            "condition": state.condition,
            "phase": state.phase,
            "current_question": None,
            "transcript": [_message_dict(m) for m in state.transcript],
            "help_request_count": state.help_request_count,
            "scroll_count": state.scroll_count,
        }
        if question is not None and state.coverage is not None:
            view["current_question"] = {
                "question_id": question.question_id,
                "question_text": question.question_text,
                "index": state.coverage.current_question_index,
                "total": len(state.script.questions) if state.script else 0,
            }
        if state.phase == "posttest":
            view["posttest"] = {
                "items": [
                    {"item_id": it.item_id, "stem": it.stem, "options": list(it.options)}
                    for it in store.posttest.items
                ]
            }
        if state.phase == "survey":
            aspects = [
                {"key": key, "prompt": prompt}
                for key, prompt in store.survey.aspects
                if state.condition != "reading" or key not in CHATBOT_ONLY_ASPECTS
            ]
            view["survey"] = {
                "aspects": aspects,
                "attention_checks": [
                    {"key": key, "prompt": prompt}
                    for key, prompt, _ in store.survey.attention_checks
                ],
                "lookup": {"key": store.survey.lookup_key, "prompt": store.survey.lookup_prompt},
                "scale": {"min": LIKERT_MIN, "max": LIKERT_MAX},
            }
        return view

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/lessons/{lesson_id}")
    def get_lesson(lesson_id: str) -> dict:
        lesson = store.lessons.get(lesson_id)
        if lesson is None:
            raise HTTPException(status_code=404, detail="unknown lesson")
        return lesson_to_doc(lesson)

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        with _api_errors():
            lesson = store.lessons.get(body.lesson_id)
            if lesson is None:
                raise HTTPException(status_code=404, detail="unknown lesson")
            condition = body.condition
            if condition in (None, "auto"):
                condition = assign_condition(body.participant_id, seed)
            if condition not in engine.CONDITIONS:
                raise InvalidInput(f"unknown condition {condition!r}")
            script = store.script_for(condition, body.script_id)
            session_id = secrets.token_hex(16)
            state, events = engine.start_session(
                lesson, script, condition,
                session_id=session_id, participant_id=body.participant_id,
                now_ms=clock(),
            )
            for event in events:
                log.append_event(event)
            states[session_id] = state
            return {"session_id": session_id, "condition": condition}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        with _api_errors():
            return session_view(get_state(session_id))

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        with _api_errors():
            with exclusive_turn(session_id):
                state = get_state(session_id)
                if state.condition == "ruffle_riley":
                    result = engine.handle_learner_message(
                        state, body.text, gateway, now_ms=clock(), templates=templates)
                elif state.condition in ("teacher_qa", "llm_qa"):
                    result = engine.handle_qa_answer(
                        state, body.text, gateway, now_ms=clock(), templates=templates)
                else:
                    raise InvalidInput("the reading condition has no chat")
                commit(state, result.state, result.events, result.messages)
                return {
                    "messages": [_message_dict(m) for m in result.messages],
                    "phase": result.state.phase,
                }

    @app.post("/sessions/{session_id}/help")
    def post_help(session_id: str) -> dict:
        with _api_errors():
            with exclusive_turn(session_id):
                state = get_state(session_id)
                result = engine.handle_help_request(
                    state, gateway, now_ms=clock(), templates=templates)
                commit(state, result.state, result.events, result.messages)
                return {
                    "message": _message_dict(result.messages[0]),
                    "help_request_count": result.state.help_request_count,
                }

    @app.post("/sessions/{session_id}/events", status_code=204)
    def post_telemetry(session_id: str, body: TelemetryBody) -> Response:
        with _api_errors():
            if body.kind != "scroll":
                raise InvalidInput("only scroll telemetry is accepted here")
            if "anchor" not in body.payload or "viewport_fraction" not in body.payload:
                raise InvalidInput("scroll payload needs anchor and viewport_fraction")
            with exclusive_turn(session_id):
                state = get_state(session_id)
                if state.phase == "done":
                    raise SessionComplete("session is done")
                event = BehaviorEvent(
                    seq=state.event_count, session_id=session_id, kind="scroll",
                    timestamp=clock(),
                    payload={"anchor": str(body.payload["anchor"]),
                             "viewport_fraction": float(body.payload["viewport_fraction"])},
                )
                log.append_event(event)
                states[session_id] = engine.apply_event(state, event)
            return Response(status_code=204)

    @app.post("/sessions/{session_id}/posttest")
    def post_posttest(session_id: str, body: PosttestBody) -> dict:
        with _api_errors():
            with exclusive_turn(session_id):
                state = get_state(session_id)
                if state.phase != "posttest":
                    raise SessionComplete(f"post-test not open in phase {state.phase}")
                known = {it.item_id for it in store.posttest.items}
                for item_id, choice in body.answers.items():
                    if item_id not in known:
                        raise UnknownItem(f"unknown post-test item {item_id!r}")
                    if not 0 <= choice <= 3:
                        raise InvalidInput(f"choice for {item_id!r} must be 0..3")
                event = BehaviorEvent(
                    seq=state.event_count, session_id=session_id, kind="posttest_answer",
                    timestamp=clock(), payload={"answers": dict(body.answers)},
                )
                log.append_event(event)
                new_state = engine.apply_event(state, event)
                states[session_id] = new_state
                hub.publish(session_id, {"type": "phase", "phase": new_state.phase})
                return {"phase": new_state.phase}

    @app.post("/sessions/{session_id}/survey")
    def post_survey(session_id: str, body: SurveyBody) -> dict:
        with _api_errors():
            with exclusive_turn(session_id):
                state = get_state(session_id)
                if state.phase != "survey":
                    raise SessionComplete(f"survey not open in phase {state.phase}")
                known = {key for key, _ in store.survey.aspects}
                known |= {key for key, _, _ in store.survey.attention_checks}
                known.add(store.survey.lookup_key)
                for key, value in body.responses.items():
                    if key not in known:
                        raise InvalidInput(f"unknown survey item {key!r}")
                    if not LIKERT_MIN <= value <= LIKERT_MAX:
                        raise InvalidInput(f"survey value for {key!r} must be "
                                           f"{LIKERT_MIN}..{LIKERT_MAX}")
                event = BehaviorEvent(
                    seq=state.event_count, session_id=session_id, kind="survey_answer",
                    timestamp=clock(), payload={"responses": dict(body.responses)},
                )
                log.append_event(event)
                states[session_id] = engine.apply_event(state, event)
                return {"phase": states[session_id].phase}

    @app.post("/sessions/{session_id}/finish")
    def post_finish(session_id: str) -> dict:
        with _api_errors():
            with exclusive_turn(session_id):
                state = get_state(session_id)
                if state.condition == "reading" and state.phase == "active":
                    event = BehaviorEvent(
                        seq=state.event_count, session_id=session_id,
                        kind="question_advance", timestamp=clock(),
                        payload={"to_phase": "posttest"},
                    )
                elif state.phase == "survey":
                    event = BehaviorEvent(
                        seq=state.event_count, session_id=session_id,
                        kind="session_end", timestamp=clock(), payload={},
                    )
                else:
                    raise SessionComplete(f"cannot finish from phase {state.phase}")
                log.append_event(event)
                new_state = engine.apply_event(state, event)
                states[session_id] = new_state
                hub.publish(session_id, {"type": "phase", "phase": new_state.phase})
                return {"phase": new_state.phase}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str, after: int = -1):
        await websocket.accept()
        try:
            state = states.get(session_id)
            if state is None:
                events = await asyncio.to_thread(log.read_events, session_id)
                if not events:
                    await websocket.close(code=4404)
                    return
                state = rehydrate_session(events)
                states[session_id] = state
        except TutorforgeError:
            await websocket.close(code=4500)
            return
        queue = hub.subscribe(session_id)
        try:
            for message in state.transcript:
                if message.turn_id > after:
                    await websocket.send_json({"type": "message",
                                               "message": _message_dict(message)})
            await websocket.send_json({"type": "phase", "phase": state.phase})
            while True:
                frame = await queue.get()
                await websocket.send_json(frame)
        except WebSocketDisconnect:
            pass
        finally:
            hub.unsubscribe(session_id, queue)

    if ui_dir is not None:
        app.mount("/app", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    # exposed for tests and diagnostic tooling
    app.state.session_states = states
    app.state.event_log = log
    return app
