"""Lesson and tutoring-script data types, on-disk format, and validation.

The on-disk formats are versioned UTF-8 JSON documents ("rr-lesson/1" and
"rr-script/1") emitted with a fixed key order so that equal values always
serialize to identical bytes and diffs stay readable for hand editing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import MalformedDocument, SchemaViolation

LESSON_FORMAT_VERSION = "rr-lesson/1"
SCRIPT_FORMAT_VERSION = "rr-script/1"

SCRIPT_SOURCES = ("llm_induced", "teacher_authored")


@dataclass(frozen=True)
class LessonText:
    """A single lesson: markdown body plus an ordered section index."""

    lesson_id: str
    title: str
    body: str
    sections: tuple[tuple[str, str], ...]  # (heading, anchor) pairs


@dataclass(frozen=True)
class Expectation:
    """One declarative sentence a learner's explanation should articulate."""

    expectation_id: str
    text: str


@dataclass(frozen=True)
class ScriptQuestion:
    question_id: str
    question_text: str
    solution_text: str
    expectations: tuple[Expectation, ...]


@dataclass(frozen=True)
class TutoringScript:
    script_id: str
    lesson_id: str
    source: str  # one of SCRIPT_SOURCES
    questions: tuple[ScriptQuestion, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[tuple[str, str, str], ...] = field(default_factory=tuple)
    # each violation is (path, rule, detail); ok iff violations is empty


# ---------------------------------------------------------------------------
# Validation


def validate_script(script: TutoringScript, lesson: LessonText) -> ValidationReport:
    """Collect every semantic rule violation; pure, never raises.

    Schema-level problems (missing fields, wrong types) are the parser's
    job; this checks the rules that hold across fields.
    """
    violations: list[tuple[str, str, str]] = []

    if script.lesson_id != lesson.lesson_id:
        violations.append(
            ("/lesson_id", "lesson_reference",
             f"script references lesson {script.lesson_id!r} but got "
             f"{lesson.lesson_id!r}")
        )
    if script.source not in SCRIPT_SOURCES:
        violations.append(("/source", "known_source", f"unknown source {script.source!r}"))
    if not script.questions:
        violations.append(("/questions", "min_questions", "script has no questions"))

    seen_qids: set[str] = set()
    for qi, question in enumerate(script.questions):
        qpath = f"/questions/{qi}"
        if question.question_id in seen_qids:
            violations.append(
                (f"{qpath}/question_id", "unique_question_id",
                 f"duplicate question_id {question.question_id!r}")
            )
        seen_qids.add(question.question_id)
        if not question.question_text.strip():
            violations.append((f"{qpath}/question_text", "nonempty_text", "empty question text"))
        if not question.solution_text.strip():
            violations.append((f"{qpath}/solution_text", "nonempty_text", "empty solution text"))
        if not question.expectations:
            violations.append(
                (qpath + "/expectations", "min_expectations",
                 f"question {question.question_id!r} has no expectations")
            )
        seen_eids: set[str] = set()
        for ei, expectation in enumerate(question.expectations):
            epath = f"{qpath}/expectations/{ei}"
            if expectation.expectation_id in seen_eids:
                violations.append(
                    (f"{epath}/expectation_id", "unique_expectation_id",
                     f"duplicate expectation_id {expectation.expectation_id!r}")
                )
            seen_eids.add(expectation.expectation_id)
            if not expectation.text.strip():
                violations.append((f"{epath}/text", "nonempty_text", "empty expectation text"))

    return ValidationReport(ok=not violations, violations=tuple(violations))


def validate_lesson(lesson: LessonText) -> ValidationReport:
    violations: list[tuple[str, str, str]] = []
    if not lesson.body.strip():
        violations.append(("/body", "nonempty_body", "lesson body is empty"))
    seen: set[str] = set()
    for si, (heading, anchor) in enumerate(lesson.sections):
        spath = f"/sections/{si}"
        if not heading.strip():
            violations.append((f"{spath}/heading", "nonempty_text", "empty heading"))
        if anchor in seen:
            violations.append((f"{spath}/anchor", "unique_anchor", f"duplicate anchor {anchor!r}"))
        seen.add(anchor)
        if anchor not in lesson.body:
            violations.append(
                (f"{spath}/anchor", "anchor_in_body",
                 f"anchor {anchor!r} does not appear in the body")
            )
    return ValidationReport(ok=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Schema walking helpers shared by the two parsers


def _decode(data: bytes) -> object:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedDocument(f"not valid UTF-8: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc


def _require(obj: object, path: str, keys: tuple[str, ...]) -> dict:
    if not isinstance(obj, dict):
        raise SchemaViolation(path or "/", f"expected object, got {type(obj).__name__}")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise SchemaViolation(f"{path}/{missing[0]}", "missing field")
    extra = [k for k in obj if k not in keys]
    if extra:
        raise SchemaViolation(f"{path}/{extra[0]}", "unexpected field")
    return obj


def _string(obj: dict, path: str, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaViolation(f"{path}/{key}", f"expected string, got {type(value).__name__}")
    return value


def _array(obj: dict, path: str, key: str) -> list:
    value = obj[key]
    if not isinstance(value, list):
        raise SchemaViolation(f"{path}/{key}", f"expected array, got {type(value).__name__}")
    return value


# ---------------------------------------------------------------------------
# Script format


def script_from_doc(obj: object) -> TutoringScript:
    """Build a script from an already-decoded JSON object."""
    root = _require(obj, "", ("version", "script_id", "lesson_id", "source", "questions"))
    version = _string(root, "", "version")
    if version != SCRIPT_FORMAT_VERSION:
        raise SchemaViolation("/version", f"expected {SCRIPT_FORMAT_VERSION!r}, got {version!r}")
    questions = []
    for qi, qobj in enumerate(_array(root, "", "questions")):
        qpath = f"/questions/{qi}"
        qd = _require(qobj, qpath, ("question_id", "question_text", "solution_text", "expectations"))
        expectations = []
        for ei, eobj in enumerate(_array(qd, qpath, "expectations")):
            epath = f"{qpath}/expectations/{ei}"
            ed = _require(eobj, epath, ("expectation_id", "text"))
            expectations.append(
                Expectation(_string(ed, epath, "expectation_id"), _string(ed, epath, "text"))
            )
        questions.append(
            ScriptQuestion(
                question_id=_string(qd, qpath, "question_id"),
                question_text=_string(qd, qpath, "question_text"),
                solution_text=_string(qd, qpath, "solution_text"),
                expectations=tuple(expectations),
            )
        )
    return TutoringScript(
        script_id=_string(root, "", "script_id"),
        lesson_id=_string(root, "", "lesson_id"),
        source=_string(root, "", "source"),
        questions=tuple(questions),
    )


def script_to_doc(script: TutoringScript) -> dict:
    return {
        "version": SCRIPT_FORMAT_VERSION,
        "script_id": script.script_id,
        "lesson_id": script.lesson_id,
        "source": script.source,
        "questions": [
            {
                "question_id": q.question_id,
                "question_text": q.question_text,
                "solution_text": q.solution_text,
                "expectations": [
                    {"expectation_id": e.expectation_id, "text": e.text}
                    for e in q.expectations
                ],
            }
            for q in script.questions
        ],
    }


def parse_script(data: bytes) -> TutoringScript:
    """Parse script-file bytes; structural checks only.

    Raises MalformedDocument for syntax problems and SchemaViolation (naming
    the offending path) for shape problems. Cross-field rules are left to
    validate_script.
    """
    return script_from_doc(_decode(data))


def emit_script(script: TutoringScript) -> bytes:
    """Canonical script serialization: fixed key order, UTF-8, trailing newline.

    A pure function of the script value, so equal scripts emit identical
    bytes.
    """
    return (json.dumps(script_to_doc(script), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Lesson format


def lesson_from_doc(obj: object) -> LessonText:
    root = _require(obj, "", ("version", "lesson_id", "title", "body", "sections"))
    version = _string(root, "", "version")
    if version != LESSON_FORMAT_VERSION:
        raise SchemaViolation("/version", f"expected {LESSON_FORMAT_VERSION!r}, got {version!r}")
    sections = []
    for si, sobj in enumerate(_array(root, "", "sections")):
        spath = f"/sections/{si}"
        sd = _require(sobj, spath, ("heading", "anchor"))
        sections.append((_string(sd, spath, "heading"), _string(sd, spath, "anchor")))
    return LessonText(
        lesson_id=_string(root, "", "lesson_id"),
        title=_string(root, "", "title"),
        body=_string(root, "", "body"),
        sections=tuple(sections),
    )


def lesson_to_doc(lesson: LessonText) -> dict:
    return {
        "version": LESSON_FORMAT_VERSION,
        "lesson_id": lesson.lesson_id,
        "title": lesson.title,
        "body": lesson.body,
        "sections": [{"heading": h, "anchor": a} for h, a in lesson.sections],
    }


def parse_lesson(data: bytes) -> LessonText:
    return lesson_from_doc(_decode(data))


def emit_lesson(lesson: LessonText) -> bytes:
    return (json.dumps(lesson_to_doc(lesson), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
