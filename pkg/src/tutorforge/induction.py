"""Automatic tutoring-script generation from a lesson text.

Four steps: induce review questions from the lesson, write a solution for
each question from lesson + question, derive expectations for each question
from question + solution, and compile the result into a script. The three
generation steps each run off their own prompt template.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import InductionError, InvalidInput, UnparseableCompletion
from .gateway import CompletionRequest, Gateway
from .model import Expectation, LessonText, ScriptQuestion, TutoringScript
from .templates import TemplateSet

logger = logging.getLogger(__name__)

INDUCTION_PROFILE = "induction"
INDUCTION_TEMPERATURE = 0.0  # generation steps stay reproducible
INDUCTION_MAX_TOKENS = 800

DEFAULT_QUESTION_COUNT = 5
DEFAULT_MAX_EXPECTATIONS = 4

LIST_REASK = "Your previous reply could not be parsed. Output one item per line and nothing else."

# ordinal markers and bullets at the start of a generated line
_MARKER_RE = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*•]\s*)+")


@dataclass(frozen=True)
class InductionConfig:
    target_question_count: int = DEFAULT_QUESTION_COUNT
    max_expectations_per_question: int = DEFAULT_MAX_EXPECTATIONS
    provider_profile: str = INDUCTION_PROFILE

    def __post_init__(self):
        if self.target_question_count < 1:
            raise InvalidInput("target_question_count must be >= 1")
        if self.max_expectations_per_question < 1:
            raise InvalidInput("max_expectations_per_question must be >= 1")


@lru_cache(maxsize=1)
def _default_templates() -> TemplateSet:
    return TemplateSet.load()


def strip_list_marker(line: str) -> str:
    return _MARKER_RE.sub("", line).strip()


def _item_lines(content: str) -> list[str]:
    lines = [strip_list_marker(line) for line in content.splitlines()]
    return [line for line in lines if line]


def _request(system: str, user: str, profile: str = INDUCTION_PROFILE) -> CompletionRequest:
    return CompletionRequest(
        model_profile=profile,
        messages=(("system", system), ("user", user)),
        temperature=INDUCTION_TEMPERATURE,
        max_output_tokens=INDUCTION_MAX_TOKENS,
    )


def _complete_lines(req: CompletionRequest, gw: Gateway, what: str) -> list[str]:
    """Parse list-shaped output, re-asking once with a stricter instruction."""
    lines = _item_lines(gw.complete(req).content)
    if lines:
        return lines
    retry = CompletionRequest(
        model_profile=req.model_profile,
        messages=req.messages + (("user", LIST_REASK),),
        temperature=req.temperature,
        max_output_tokens=req.max_output_tokens,
    )
    lines = _item_lines(gw.complete(retry).content)
    if lines:
        return lines
    raise UnparseableCompletion(f"no {what} lines found after one re-ask")


def generate_questions(
    lesson: LessonText,
    cfg: InductionConfig,
    gw: Gateway,
    templates: TemplateSet | None = None,
) -> list[str]:
    """Step one: review questions straight from the lesson text."""
    templates = templates or _default_templates()
    system, user = templates.render(
        "gen_questions",
        lesson_title=lesson.title,
        lesson_body=lesson.body,
        target_count=cfg.target_question_count,
    )
    lines = _complete_lines(_request(system, user, cfg.provider_profile), gw, "question")
    if len(lines) > cfg.target_question_count:
        logger.info("truncating %d generated questions to %d",
                    len(lines), cfg.target_question_count)
        lines = lines[:cfg.target_question_count]
    return lines


def generate_solution(
    lesson: LessonText,
    question_text: str,
    gw: Gateway,
    templates: TemplateSet | None = None,
    profile: str = INDUCTION_PROFILE,
) -> str:
    """Step two: a solution from lesson + question."""
    if not question_text.strip():
        raise InvalidInput("question_text must be non-empty")
    templates = templates or _default_templates()
    system, user = templates.render(
        "gen_solution",
        lesson_body=lesson.body,
        question_text=question_text,
    )
    req = _request(system, user, profile)
    content = gw.complete(req).content.strip()
    if not content:
        retry = CompletionRequest(
            model_profile=req.model_profile,
            messages=req.messages + (("user", LIST_REASK),),
            temperature=req.temperature,
            max_output_tokens=req.max_output_tokens,
        )
        content = gw.complete(retry).content.strip()
    if not content:
        raise UnparseableCompletion("blank solution after one re-ask")
    return content


def generate_expectations(
    question_text: str,
    solution_text: str,
    gw: Gateway,
    cfg: InductionConfig | None = None,
    question_id: str = "q1",
    templates: TemplateSet | None = None,
) -> list[Expectation]:
    """Step three: expectations from question + solution (never the lesson)."""
    if not question_text.strip() or not solution_text.strip():
        raise InvalidInput("question_text and solution_text must be non-empty")
    cfg = cfg or InductionConfig()
    templates = templates or _default_templates()
    system, user = templates.render(
        "gen_expectations",
        question_text=question_text,
        solution_text=solution_text,
        max_count=cfg.max_expectations_per_question,
    )
    lines = _complete_lines(_request(system, user, cfg.provider_profile), gw, "expectation")
    if len(lines) > cfg.max_expectations_per_question:
        logger.info("truncating %d generated expectations to %d",
                    len(lines), cfg.max_expectations_per_question)
        lines = lines[:cfg.max_expectations_per_question]
    return [
        Expectation(expectation_id=f"{question_id}-e{i + 1}", text=text)
        for i, text in enumerate(lines)
    ]


def compile_script(
    lesson: LessonText,
    cfg: InductionConfig,
    gw: Gateway,
    templates: TemplateSet | None = None,
) -> TutoringScript:
    """Run the full pipeline; all-or-nothing, with errors labeled by step
    and question index."""
    templates = templates or _default_templates()
    try:
        question_texts = generate_questions(lesson, cfg, gw, templates)
    except Exception as exc:
        raise InductionError("questions", None, exc) from exc

    questions = []
    for qi, question_text in enumerate(question_texts):
        question_id = f"q{qi + 1}"
        try:
            solution_text = generate_solution(lesson, question_text, gw, templates,
                                              profile=cfg.provider_profile)
        except Exception as exc:
            raise InductionError("solution", qi, exc) from exc
        try:
            expectations = generate_expectations(
                question_text, solution_text, gw, cfg,
                question_id=question_id, templates=templates,
            )
        except Exception as exc:
            raise InductionError("expectations", qi, exc) from exc
        questions.append(ScriptQuestion(
            question_id=question_id,
            question_text=question_text,
            solution_text=solution_text,
            expectations=tuple(expectations),
        ))

    return TutoringScript(
        script_id=f"{lesson.lesson_id}-script",
        lesson_id=lesson.lesson_id,
        source="llm_induced",
        questions=tuple(questions),
    )
