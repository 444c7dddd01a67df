"""The tutoring session state machine.

Outer loop: one script question after another. Inner loop: the learner
explains, a misconception judge may hand the turn to Riley, a coverage judge
marks which expected points the learner has articulated, and Ruffle asks
follow-ups until all of them are covered (or a cap forces the advance).

Everything observable is an event. Session state is a pure left-fold of the
event stream (`apply_event`), and every operation here returns the events it
decided on together with the state produced by folding them, so a live
session and a replayed log can never disagree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

from .errors import (
    CorruptLog,
    InvalidInput,
    ProviderFailure,
    SessionComplete,
    SessionIncomplete,
)
from .events import BehaviorEvent
from .gateway import CompletionRequest, CompletionResponse, Gateway
from .model import (
    LessonText,
    ScriptQuestion,
    TutoringScript,
    lesson_from_doc,
    lesson_to_doc,
    script_from_doc,
    script_to_doc,
    validate_script,
)
from .templates import TemplateSet

CONDITIONS = ("reading", "teacher_qa", "llm_qa", "ruffle_riley")
PHASES = ("active", "awaiting_revision", "posttest", "survey", "done")
AUTHORS = ("learner", "ruffle", "riley", "system")
CAUSES = (
    "learner_input",
    "help_request",
    "misconception_flag",
    "coverage_followup",
    "question_transition",
    "session_bookend",
)

# Inner-loop guards. FOLLOWUP_CAP bounds Ruffle's follow-ups per question;
# TURN_CAP additionally bounds learner turns per question so a session
# terminates no matter what the judges return.
FOLLOWUP_CAP = 8
TURN_CAP = FOLLOWUP_CAP + 2

TRANSCRIPT_WINDOW = 20

JUDGE_PROFILE = "judge"
PERSONA_PROFILE = "persona"
JUDGE_TEMPERATURE = 0.0
PERSONA_TEMPERATURE = 0.7
JUDGE_MAX_TOKENS = 500
PERSONA_MAX_TOKENS = 350

GRADES = ("correct", "partially_correct", "incorrect")

OPENING_BOOKEND = {
    "reading": (
        "Welcome! Read the lesson at your own pace. "
        "Press Finish when you are ready for the quiz."
    ),
    "teacher_qa": (
        "Welcome! Study the lesson and answer the review questions. "
        "After each answer you will see feedback and a sample solution."
    ),
    "llm_qa": (
        "Welcome! Study the lesson and answer the review questions. "
        "After each answer you will see feedback and a sample solution."
    ),
    "ruffle_riley": (
        "Welcome! Today you are the teacher: explain each question to Ruffle "
        "in your own words. Press Help any time to ask Riley."
    ),
}

RUFFLE_FIRST_QUESTION = (
    "Hi! I'm Ruffle and I'm so excited to learn from you today. "
    "Can you teach me this first one: {question}"
)
RUFFLE_NEXT_QUESTION = "Thanks, that makes sense to me now! Here is my next question: {question}"
RUFFLE_FORCED_NEXT = "Let's come back to that one another time. Here is my next question: {question}"
RUFFLE_CLOSING = (
    "That was everything I wanted to ask today. Thank you for teaching me! "
    "You can move on to the quiz now."
)
RUFFLE_FORCED_CLOSING = (
    "Let's leave it there. Thank you for teaching me today! "
    "You can move on to the quiz now."
)

QA_QUESTION = "Question {num} of {total}: {question}"
QA_CLOSING = "That was the last question. You can move on to the quiz now."
QA_GRADE_WORDING = {
    "correct": "Correct, nice work!",
    "partially_correct": "Partially correct.",
    "incorrect": "Not quite.",
}

COVERAGE_REASK = (
    "Your previous reply could not be parsed. Output exactly one line per "
    "expected point in the required EXPECTATION format and nothing else."
)

_COVERAGE_LINE_RE = re.compile(
    r"^\s*EXPECTATION\s+(\S+?)\s*:\s*(COVERED|NOT_COVERED)\s*$", re.IGNORECASE
)
_VERDICT_RE = re.compile(r"^\s*VERDICT\s*:\s*(OK|FLAW)\s*$", re.IGNORECASE | re.MULTILINE)
_FEEDBACK_RE = re.compile(r"FEEDBACK\s*:\s*(.+)", re.IGNORECASE | re.DOTALL)
_GRADE_RE = re.compile(
    r"GRADE\s*:\s*(CORRECT|PARTIALLY_CORRECT|INCORRECT)", re.IGNORECASE
)


# ---------------------------------------------------------------------------
# State types


@dataclass(frozen=True)
class ChatMessage:
    turn_id: int
    author: str
    content: str
    cause: str
    timestamp: int


@dataclass(frozen=True)
class CoverageState:
    """Per-question expectation coverage plus inner-loop counters."""

    covered: dict  # question_id -> {expectation_id: bool}
    current_question_index: int
    followup_count_current_question: int
    turns_current_question: int
    followups_by_question: tuple[int, ...]


@dataclass(frozen=True)
class SessionState:
    session_id: str
    participant_id: str
    condition: str
    phase: str
    lesson: LessonText
    script: TutoringScript | None
    transcript: tuple[ChatMessage, ...]
    coverage: CoverageState | None
    help_request_count: int
    forced_advance_count: int
    scroll_count: int
    posttest_answers: dict | None
    survey_responses: dict | None
    started_at: int
    ended_at: int | None
    event_count: int

    def current_question(self) -> ScriptQuestion | None:
        if self.script is None or self.coverage is None:
            return None
        idx = self.coverage.current_question_index
        if idx >= len(self.script.questions):
            return None
        return self.script.questions[idx]

    def all_covered(self) -> bool:
        if self.coverage is None or self.script is None:
            return True
        return all(
            all(flags.values()) for flags in self.coverage.covered.values()
        )


@dataclass(frozen=True)
class JudgeVerdict:
    """Outcome of one judge call; exactly the fields of its kind are set."""

    kind: str  # coverage | misconception | qa_grade
    coverage: dict | None = None  # expectation_id -> bool
    flagged: bool | None = None
    feedback: str | None = None
    grade: str | None = None

    def __post_init__(self):
        shapes = {
            "coverage": self.coverage is not None and self.flagged is None and self.grade is None,
            "misconception": self.coverage is None and self.flagged is not None
            and self.grade is None,
            "qa_grade": self.coverage is None and self.flagged is None and self.grade in GRADES,
        }
        if not shapes.get(self.kind, False):
            raise InvalidInput(f"malformed verdict for kind {self.kind!r}")


@dataclass(frozen=True)
class TurnResult:
    state: SessionState
    events: tuple[BehaviorEvent, ...]
    messages: tuple[ChatMessage, ...]


@dataclass(frozen=True)
class SessionSummary:
    session_id: str
    condition: str
    duration_minutes: float
    learner_turns: int
    help_request_count: int
    forced_advances: int
    followups_by_question: tuple[int, ...]
    scroll_count: int


@lru_cache(maxsize=1)
def _default_templates() -> TemplateSet:
    return TemplateSet.load()


# ---------------------------------------------------------------------------
# Event fold


def apply_event(state: SessionState | None, event: BehaviorEvent) -> SessionState:
    """Fold one event into the session state. Pure; raises CorruptLog on
    events that cannot follow from the current state."""
    kind = event.kind
    payload = event.payload

    if kind == "session_start":
        if state is not None:
            raise CorruptLog(event.seq, "session_start after the first event")
        lesson = lesson_from_doc(payload["lesson"])
        script = script_from_doc(payload["script"]) if payload.get("script") else None
        coverage = None
        if script is not None:
            coverage = CoverageState(
                covered={
                    q.question_id: {e.expectation_id: False for e in q.expectations}
                    for q in script.questions
                },
                current_question_index=0,
                followup_count_current_question=0,
                turns_current_question=0,
                followups_by_question=(),
            )
        return SessionState(
            session_id=event.session_id,
            participant_id=payload["participant_id"],
            condition=payload["condition"],
            phase="active",
            lesson=lesson,
            script=script,
            transcript=(),
            coverage=coverage,
            help_request_count=0,
            forced_advance_count=0,
            scroll_count=0,
            posttest_answers=None,
            survey_responses=None,
            started_at=event.timestamp,
            ended_at=None,
            event_count=1,
        )

    if state is None:
        raise CorruptLog(event.seq, f"{kind} before session_start")
    if state.phase == "done":
        raise CorruptLog(event.seq, f"{kind} after session_end")

    bump = {"event_count": state.event_count + 1}

    if kind == "learner_message":
        message = ChatMessage(
            turn_id=len(state.transcript),
            author="learner",
            content=payload["content"],
            cause="learner_input",
            timestamp=event.timestamp,
        )
        coverage = state.coverage
        if coverage is not None:
            coverage = replace(
                coverage, turns_current_question=coverage.turns_current_question + 1
            )
        return replace(
            state,
            transcript=state.transcript + (message,),
            phase="active",
            coverage=coverage,
            **bump,
        )

    if kind == "agent_message":
        message = ChatMessage(
            turn_id=len(state.transcript),
            author=payload["author"],
            content=payload["content"],
            cause=payload["cause"],
            timestamp=event.timestamp,
        )
        changes: dict = {"transcript": state.transcript + (message,)}
        if payload["author"] == "riley" and payload["cause"] == "help_request":
            changes["help_request_count"] = state.help_request_count + 1
        if payload["cause"] == "misconception_flag":
            changes["phase"] = "awaiting_revision"
        coverage = state.coverage
        if coverage is not None:
            if payload["cause"] == "coverage_followup":
                coverage = replace(
                    coverage,
                    followup_count_current_question=coverage.followup_count_current_question + 1,
                )
            newly = payload.get("newly_covered")
            if newly:
                coverage = _mark_covered(coverage, state, newly)
            changes["coverage"] = coverage
        return replace(state, **changes, **bump)

    if kind == "help_request":
        return replace(state, **bump)

    if kind == "scroll":
        return replace(state, scroll_count=state.scroll_count + 1, **bump)

    if kind == "forced_advance":
        return replace(state, forced_advance_count=state.forced_advance_count + 1, **bump)

    if kind == "question_advance":
        changes = {}
        coverage = state.coverage
        if coverage is not None:
            newly = payload.get("newly_covered")
            if newly:
                coverage = _mark_covered(coverage, state, newly)
            if payload.get("to_index") is not None:
                coverage = replace(
                    coverage,
                    current_question_index=payload["to_index"],
                    followups_by_question=coverage.followups_by_question
                    + (coverage.followup_count_current_question,),
                    followup_count_current_question=0,
                    turns_current_question=0,
                )
            changes["coverage"] = coverage
        if payload.get("to_phase") == "posttest":
            changes["phase"] = "posttest"
        return replace(state, **changes, **bump)

    if kind == "posttest_answer":
        return replace(state, posttest_answers=dict(payload["answers"]), phase="survey", **bump)

    if kind == "survey_answer":
        return replace(state, survey_responses=dict(payload["responses"]), **bump)

    if kind == "session_end":
        return replace(state, phase="done", ended_at=event.timestamp, **bump)

    raise CorruptLog(event.seq, f"unknown event kind {kind!r}")


def _mark_covered(coverage: CoverageState, state: SessionState,
                  expectation_ids: Sequence[str]) -> CoverageState:
    assert state.script is not None
    question = state.script.questions[coverage.current_question_index]
    flags = dict(coverage.covered[question.question_id])
    for eid in expectation_ids:
        if eid not in flags:
            raise CorruptLog(None, f"coverage for unknown expectation {eid!r}")
        flags[eid] = True
    covered = dict(coverage.covered)
    covered[question.question_id] = flags
    return replace(coverage, covered=covered)


def fold_session(events: Sequence[BehaviorEvent]) -> SessionState:
    """Fold a full event sequence, enforcing log-structure invariants."""
    if not events:
        raise CorruptLog(None, "empty log")
    if events[0].kind != "session_start":
        raise CorruptLog(events[0].seq, "log must begin with session_start")
    state: SessionState | None = None
    for expected_seq, event in enumerate(events):
        if event.seq != expected_seq:
            raise CorruptLog(event.seq, f"expected seq {expected_seq}")
        if state is not None and event.session_id != state.session_id:
            raise CorruptLog(event.seq, "session_id changed mid-log")
        try:
            state = apply_event(state, event)
        except CorruptLog as exc:
            raise CorruptLog(event.seq, exc.detail) from None
    assert state is not None
    return state


# ---------------------------------------------------------------------------
# Prompt assembly


def _render_transcript(messages: Sequence[ChatMessage]) -> str:
    display = {"learner": "Learner", "ruffle": "Ruffle", "riley": "Riley", "system": "System"}
    if not messages:
        return "(no messages yet)"
    return "\n".join(f"{display[m.author]}: {m.content}" for m in messages)


def _render_script(script: TutoringScript) -> str:
    parts = []
    for q in script.questions:
        lines = [f"Question {q.question_id}: {q.question_text}", "Expected points:"]
        lines += [f"- ({e.expectation_id}) {e.text}" for e in q.expectations]
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def _render_expectations(question: ScriptQuestion) -> str:
    return "\n".join(f"- {e.expectation_id}: {e.text}" for e in question.expectations)


def assemble_agent_prompt(
    role: str,
    state: SessionState,
    task_instruction: str = "Continue the conversation with one short, friendly message.",
    templates: TemplateSet | None = None,
) -> CompletionRequest:
    """Build a persona request: Ruffle sees the script, Riley sees the lesson,
    both see only the last TRANSCRIPT_WINDOW messages."""
    if state.condition != "ruffle_riley":
        raise InvalidInput("agent prompts exist only in the ruffle_riley condition")
    if role not in ("ruffle", "riley"):
        raise InvalidInput(f"unknown agent role {role!r}")
    templates = templates or _default_templates()
    tail = _render_transcript(state.transcript[-TRANSCRIPT_WINDOW:])
    if role == "ruffle":
        assert state.script is not None
        system, user = templates.render(
            "ruffle_system",
            script_rendering=_render_script(state.script),
            transcript_rendering=tail,
            task_instruction=task_instruction,
        )
    else:
        system, user = templates.render(
            "riley_system",
            lesson_title=state.lesson.title,
            lesson_body=state.lesson.body,
            transcript_rendering=tail,
            task_instruction=task_instruction,
        )
    return CompletionRequest(
        model_profile=PERSONA_PROFILE,
        messages=(("system", system), ("user", user)),
        temperature=PERSONA_TEMPERATURE,
        max_output_tokens=PERSONA_MAX_TOKENS,
    )


def _judge_request(system: str, user: str) -> CompletionRequest:
    return CompletionRequest(
        model_profile=JUDGE_PROFILE,
        messages=(("system", system), ("user", user)),
        temperature=JUDGE_TEMPERATURE,
        max_output_tokens=JUDGE_MAX_TOKENS,
    )


def _persona_text(resp: CompletionResponse) -> str:
    text = resp.content.strip()
    if not text or resp.finish_reason == "error":
        raise ProviderFailure("persona completion was empty")
    return text


# ---------------------------------------------------------------------------
# Judges


def judge_coverage(
    question: ScriptQuestion,
    transcript_slice: Sequence[ChatMessage],
    gw: Gateway,
    templates: TemplateSet | None = None,
) -> JudgeVerdict:
    """One temperature-0 judge call; expectations the judge does not mention
    default to not-covered, and an unparseable reply is re-asked once before
    failing safe to all-not-covered."""
    if not any(m.author == "learner" for m in transcript_slice):
        raise InvalidInput("coverage judgment needs at least one learner message")
    templates = templates or _default_templates()
    system, user = templates.render(
        "coverage_judge",
        question_text=question.question_text,
        expectations_rendering=_render_expectations(question),
        transcript_rendering=_render_transcript(transcript_slice),
    )
    request = _judge_request(system, user)
    known = {e.expectation_id for e in question.expectations}

    def parse(content: str) -> dict | None:
        found: dict[str, bool] = {}
        for line in content.splitlines():
            match = _COVERAGE_LINE_RE.match(line)
            if match and match.group(1) in known:
                found[match.group(1)] = match.group(2).upper() == "COVERED"
        return found or None

    found = parse(gw.complete(request).content)
    if found is None:
        retry = CompletionRequest(
            model_profile=request.model_profile,
            messages=request.messages + (("user", COVERAGE_REASK),),
            temperature=request.temperature,
            max_output_tokens=request.max_output_tokens,
        )
        found = parse(gw.complete(retry).content)
    if found is None:
        found = {}
    coverage = {e.expectation_id: found.get(e.expectation_id, False)
                for e in question.expectations}
    return JudgeVerdict(kind="coverage", coverage=coverage)


def detect_misconception(
    lesson: LessonText,
    question: ScriptQuestion,
    learner_text: str,
    gw: Gateway,
    templates: TemplateSet | None = None,
) -> JudgeVerdict:
    """Flag factually wrong learner statements. Fails safe toward not
    interrupting: no verdict line, or FLAW without feedback, reads as OK."""
    if not learner_text.strip():
        raise InvalidInput("learner_text must be non-empty")
    templates = templates or _default_templates()
    system, user = templates.render(
        "misconception_judge",
        lesson_body=lesson.body,
        question_text=question.question_text,
        learner_text=learner_text,
    )
    content = gw.complete(_judge_request(system, user)).content
    verdict = _VERDICT_RE.search(content)
    if verdict is None or verdict.group(1).upper() == "OK":
        return JudgeVerdict(kind="misconception", flagged=False, feedback="")
    feedback_match = _FEEDBACK_RE.search(content)
    feedback = feedback_match.group(1).strip() if feedback_match else ""
    if not feedback:
        return JudgeVerdict(kind="misconception", flagged=False, feedback="")
    return JudgeVerdict(kind="misconception", flagged=True, feedback=feedback)


def _grade_answer(
    question: ScriptQuestion,
    answer_text: str,
    gw: Gateway,
    templates: TemplateSet,
) -> JudgeVerdict:
    system, user = templates.render(
        "qa_grader",
        question_text=question.question_text,
        solution_text=question.solution_text,
        answer_text=answer_text,
    )
    content = gw.complete(_judge_request(system, user)).content
    match = _GRADE_RE.search(content)
    grade = match.group(1).lower() if match else "incorrect"
    return JudgeVerdict(kind="qa_grade", grade=grade)


# ---------------------------------------------------------------------------
# Session operations


def start_session(
    lesson: LessonText,
    script: TutoringScript | None,
    condition: str,
    *,
    session_id: str,
    participant_id: str,
    now_ms: int,
) -> tuple[SessionState, tuple[BehaviorEvent, ...]]:
    """Open a session: a start event, a system bookend message, and for the
    chatbot conditions the first question."""
    if condition not in CONDITIONS:
        raise InvalidInput(f"unknown condition {condition!r}")
    if condition == "reading":
        script = None
    else:
        if script is None:
            raise InvalidInput(f"condition {condition!r} requires a tutoring script")
        report = validate_script(script, lesson)
        if not report.ok:
            raise InvalidInput(f"script invalid: {report.violations[0]}")

    events = [
        BehaviorEvent(
            seq=0,
            session_id=session_id,
            kind="session_start",
            timestamp=now_ms,
            payload={
                "participant_id": participant_id,
                "condition": condition,
                "lesson": lesson_to_doc(lesson),
                "script": script_to_doc(script) if script else None,
            },
        ),
        BehaviorEvent(
            seq=1,
            session_id=session_id,
            kind="agent_message",
            timestamp=now_ms,
            payload={"author": "system", "content": OPENING_BOOKEND[condition],
                     "cause": "session_bookend"},
        ),
    ]
    if condition == "ruffle_riley":
        assert script is not None
        events.append(BehaviorEvent(
            seq=2, session_id=session_id, kind="agent_message", timestamp=now_ms,
            payload={
                "author": "ruffle",
                "content": RUFFLE_FIRST_QUESTION.format(question=script.questions[0].question_text),
                "cause": "question_transition",
            },
        ))
    elif condition in ("teacher_qa", "llm_qa"):
        assert script is not None
        events.append(BehaviorEvent(
            seq=2, session_id=session_id, kind="agent_message", timestamp=now_ms,
            payload={
                "author": "system",
                "content": QA_QUESTION.format(
                    num=1, total=len(script.questions),
                    question=script.questions[0].question_text),
                "cause": "question_transition",
            },
        ))

    state: SessionState | None = None
    for event in events:
        state = apply_event(state, event)
    assert state is not None
    return state, tuple(events)


def _question_slice(state: SessionState) -> tuple[ChatMessage, ...]:
    """Messages belonging to the current question: from its presenting
    question_transition message onward."""
    start = 0
    for i in range(len(state.transcript) - 1, -1, -1):
        if state.transcript[i].cause == "question_transition":
            start = i
            break
    return state.transcript[start:]


def advance_outer_loop(
    state: SessionState,
    *,
    now_ms: int,
    forced: bool = False,
    forced_reason: str | None = None,
    newly_covered: Sequence[str] = (),
) -> list[BehaviorEvent]:
    """Events that move a ruffle_riley session to the next question, or to
    the post-test after the last one."""
    assert state.script is not None and state.coverage is not None
    idx = state.coverage.current_question_index
    total = len(state.script.questions)
    session_id = state.session_id
    seq = state.event_count
    events: list[BehaviorEvent] = []
    if forced:
        events.append(BehaviorEvent(
            seq=seq, session_id=session_id, kind="forced_advance", timestamp=now_ms,
            payload={
                "question_index": idx,
                "followups": state.coverage.followup_count_current_question,
                "reason": forced_reason or "followup_cap",
            },
        ))
        seq += 1
    advance_payload: dict = {"from_index": idx, "to_index": idx + 1}
    if newly_covered:
        advance_payload["newly_covered"] = list(newly_covered)
    last = idx + 1 >= total
    if last:
        advance_payload["to_phase"] = "posttest"
        closing = RUFFLE_FORCED_CLOSING if forced else RUFFLE_CLOSING
        message_payload = {"author": "ruffle", "content": closing, "cause": "session_bookend"}
    else:
        next_question = state.script.questions[idx + 1]
        text = RUFFLE_FORCED_NEXT if forced else RUFFLE_NEXT_QUESTION
        message_payload = {
            "author": "ruffle",
            "content": text.format(question=next_question.question_text),
            "cause": "question_transition",
        }
    events.append(BehaviorEvent(
        seq=seq, session_id=session_id, kind="question_advance", timestamp=now_ms,
        payload=advance_payload,
    ))
    events.append(BehaviorEvent(
        seq=seq + 1, session_id=session_id, kind="agent_message", timestamp=now_ms,
        payload=message_payload,
    ))
    return events


def _finish_turn(state: SessionState, events: Sequence[BehaviorEvent]) -> TurnResult:
    new_state = state
    for event in events:
        new_state = apply_event(new_state, event)
    appended = len(new_state.transcript) - len(state.transcript)
    messages = new_state.transcript[len(state.transcript):] if appended else ()
    agent_messages = tuple(m for m in messages if m.author != "learner")
    return TurnResult(state=new_state, events=tuple(events), messages=agent_messages)


def handle_learner_message(
    state: SessionState,
    text: str,
    gw: Gateway,
    *,
    now_ms: int,
    templates: TemplateSet | None = None,
) -> TurnResult:
    """One learner turn in the ruffle_riley condition.

    Pipeline: misconception judge first (a flag hands the turn to Riley and
    pauses Ruffle), then the coverage judge over the whole current-question
    slice, then either an outer-loop advance or a Ruffle follow-up aimed at
    an open expectation. All provider calls happen before any event is
    created, so a ProviderFailure leaves the session untouched.
    """
    if state.condition != "ruffle_riley":
        raise InvalidInput("learner chat turns exist only in the ruffle_riley condition")
    if state.phase not in ("active", "awaiting_revision"):
        raise SessionComplete(f"session is in phase {state.phase}")
    if not text.strip():
        raise InvalidInput("message text must be non-empty")
    assert state.script is not None and state.coverage is not None
    templates = templates or _default_templates()

    question = state.current_question()
    assert question is not None
    session_id = state.session_id
    seq = state.event_count

    learner_event = BehaviorEvent(
        seq=seq, session_id=session_id, kind="learner_message", timestamp=now_ms,
        payload={"content": text},
    )

    # Hard per-question turn cap: advance without consulting any judge, so
    # the outer loop terminates no matter what the judges keep saying.
    if state.coverage.turns_current_question + 1 >= TURN_CAP:
        interim = apply_event(state, learner_event)
        events = [learner_event] + advance_outer_loop(
            interim, now_ms=now_ms, forced=True, forced_reason="turn_cap"
        )
        return _finish_turn(state, events)

    verdict = detect_misconception(state.lesson, question, text, gw, templates)
    if verdict.flagged:
        riley_event = BehaviorEvent(
            seq=seq + 1, session_id=session_id, kind="agent_message", timestamp=now_ms,
            payload={"author": "riley", "content": verdict.feedback,
                     "cause": "misconception_flag"},
        )
        return _finish_turn(state, [learner_event, riley_event])

    pending = ChatMessage(
        turn_id=len(state.transcript), author="learner", content=text,
        cause="learner_input", timestamp=now_ms,
    )
    slice_with_pending = _question_slice(state) + (pending,)
    coverage_verdict = judge_coverage(question, slice_with_pending, gw, templates)
    assert coverage_verdict.coverage is not None
    already = state.coverage.covered[question.question_id]
    newly = [e.expectation_id for e in question.expectations
             if coverage_verdict.coverage[e.expectation_id] and not already[e.expectation_id]]
    open_after = [e for e in question.expectations
                  if not (already[e.expectation_id] or coverage_verdict.coverage[e.expectation_id])]

    interim = apply_event(state, learner_event)
    if not open_after:
        events = [learner_event] + advance_outer_loop(
            interim, now_ms=now_ms, newly_covered=newly
        )
        return _finish_turn(state, events)

    if state.coverage.followup_count_current_question >= FOLLOWUP_CAP:
        events = [learner_event] + advance_outer_loop(
            interim, now_ms=now_ms, forced=True, forced_reason="followup_cap",
            newly_covered=newly,
        )
        return _finish_turn(state, events)

    target = open_after[0]
    prompt = assemble_agent_prompt(
        "ruffle",
        interim,
        task_instruction=(
            f'The learner has not yet articulated this expected point: "{target.text}". '
            "Do not state the point yourself; ask one short, friendly follow-up "
            "question that coaxes the learner to express it."
        ),
        templates=templates,
    )
    followup_text = _persona_text(gw.complete(prompt))
    followup_event = BehaviorEvent(
        seq=seq + 1, session_id=session_id, kind="agent_message", timestamp=now_ms,
        payload={
            "author": "ruffle",
            "content": followup_text,
            "cause": "coverage_followup",
            "newly_covered": newly,
            "target_expectation_id": target.expectation_id,
        },
    )
    return _finish_turn(state, [learner_event, followup_event])


def handle_help_request(
    state: SessionState,
    gw: Gateway,
    *,
    now_ms: int,
    templates: TemplateSet | None = None,
) -> TurnResult:
    """Riley answers a help request; coverage and phase are untouched."""
    if state.condition != "ruffle_riley":
        raise InvalidInput("help requests exist only in the ruffle_riley condition")
    if state.phase not in ("active", "awaiting_revision"):
        raise SessionComplete(f"session is in phase {state.phase}")
    question = state.current_question()
    assert question is not None
    templates = templates or _default_templates()
    prompt = assemble_agent_prompt(
        "riley",
        state,
        task_instruction=(
            "The learner pressed the help button while working on this question: "
            f'"{question.question_text}". Give one short, concrete pointer from '
            "the lesson that helps them move forward."
        ),
        templates=templates,
    )
    help_text = _persona_text(gw.complete(prompt))
    session_id = state.session_id
    seq = state.event_count
    events = [
        BehaviorEvent(seq=seq, session_id=session_id, kind="help_request",
                      timestamp=now_ms, payload={}),
        BehaviorEvent(
            seq=seq + 1, session_id=session_id, kind="agent_message", timestamp=now_ms,
            payload={"author": "riley", "content": help_text, "cause": "help_request"},
        ),
    ]
    return _finish_turn(state, events)


def handle_qa_answer(
    state: SessionState,
    text: str,
    gw: Gateway,
    *,
    now_ms: int,
    templates: TemplateSet | None = None,
) -> TurnResult:
    """One question-answer exchange in the teacher_qa / llm_qa conditions.

    The reply always carries the grade wording and the sample solution
    verbatim, then presents the next question (or closes the sequence).
    An empty answer grades as incorrect without a judge call.
    """
    if state.condition not in ("teacher_qa", "llm_qa"):
        raise InvalidInput("QA answers exist only in the teacher_qa/llm_qa conditions")
    if state.phase != "active":
        raise SessionComplete(f"session is in phase {state.phase}")
    assert state.script is not None and state.coverage is not None
    templates = templates or _default_templates()

    question = state.current_question()
    assert question is not None
    if not text.strip():
        grade = "incorrect"
    else:
        grade = _grade_answer(question, text, gw, templates).grade
        assert grade is not None

    idx = state.coverage.current_question_index
    total = len(state.script.questions)
    feedback = f"{QA_GRADE_WORDING[grade]} Sample solution: {question.solution_text}"
    session_id = state.session_id
    seq = state.event_count

    events = [BehaviorEvent(
        seq=seq, session_id=session_id, kind="learner_message", timestamp=now_ms,
        payload={"content": text},
    )]
    last = idx + 1 >= total
    advance_payload: dict = {"from_index": idx, "to_index": idx + 1}
    if last:
        advance_payload["to_phase"] = "posttest"
        content = f"{feedback}\n\n{QA_CLOSING}"
        cause = "session_bookend"
    else:
        next_question = state.script.questions[idx + 1]
        content = feedback + "\n\n" + QA_QUESTION.format(
            num=idx + 2, total=total, question=next_question.question_text)
        cause = "question_transition"
    events.append(BehaviorEvent(
        seq=seq + 1, session_id=session_id, kind="question_advance", timestamp=now_ms,
        payload=advance_payload,
    ))
    events.append(BehaviorEvent(
        seq=seq + 2, session_id=session_id, kind="agent_message", timestamp=now_ms,
        payload={"author": "system", "content": content, "cause": cause, "grade": grade},
    ))
    return _finish_turn(state, events)


def session_summary(state: SessionState) -> SessionSummary:
    """Headline behavior numbers for a finished session."""
    if state.phase != "done":
        raise SessionIncomplete(f"session is in phase {state.phase}")
    assert state.ended_at is not None
    duration = round((state.ended_at - state.started_at) / 60000.0, 1)
    learner_turns = sum(1 for m in state.transcript if m.author == "learner")
    followups = state.coverage.followups_by_question if state.coverage else ()
    return SessionSummary(
        session_id=state.session_id,
        condition=state.condition,
        duration_minutes=duration,
        learner_turns=learner_turns,
        help_request_count=state.help_request_count,
        forced_advances=state.forced_advance_count,
        followups_by_question=followups,
        scroll_count=state.scroll_count,
    )
