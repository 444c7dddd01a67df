"""Prompt templates: editable data files with documented placeholders.

Each template file holds a system part and a user part separated by a line
containing only `---`. Placeholders use `$name` syntax; rendering with the
full placeholder map must leave nothing unresolved, and a template may only
reference placeholders documented for its id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from .errors import InvalidInput

TEMPLATE_IDS = (
    "gen_questions",
    "gen_solution",
    "gen_expectations",
    "ruffle_system",
    "riley_system",
    "coverage_judge",
    "misconception_judge",
    "qa_grader",
)

TEMPLATE_PLACEHOLDERS: dict[str, frozenset[str]] = {
    "gen_questions": frozenset({"lesson_title", "lesson_body", "target_count"}),
    "gen_solution": frozenset({"lesson_body", "question_text"}),
    "gen_expectations": frozenset({"question_text", "solution_text", "max_count"}),
    "ruffle_system": frozenset({"script_rendering", "transcript_rendering", "task_instruction"}),
    "riley_system": frozenset({"lesson_title", "lesson_body", "transcript_rendering",
                               "task_instruction"}),
    "coverage_judge": frozenset({"question_text", "expectations_rendering",
                                 "transcript_rendering"}),
    "misconception_judge": frozenset({"lesson_body", "question_text", "learner_text"}),
    "qa_grader": frozenset({"question_text", "solution_text", "answer_text"}),
}

# Instruction sentences both persona templates must carry. Kept here so tests
# can assert the rendered prompts against the shipped template text.
TONE_INSTRUCTION = "Keep every reply warm, positive, and encouraging."
SCOPE_INSTRUCTION_RUFFLE = "Never bring in facts from outside the tutoring script."
SCOPE_INSTRUCTION_RILEY = "Never bring in facts from outside the lesson text."

_PLACEHOLDER_RE = re.compile(r"\$(?:\{([_a-z][_a-z0-9]*)\}|([_a-z][_a-z0-9]*))")

_SEPARATOR = "\n---\n"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    system_text: str
    user_text: str

    @property
    def placeholders(self) -> frozenset[str]:
        found = set()
        for match in _PLACEHOLDER_RE.finditer(self.system_text + "\n" + self.user_text):
            found.add(match.group(1) or match.group(2))
        return frozenset(found)

    def render(self, **values: object) -> tuple[str, str]:
        """Substitute every placeholder; raises on any unresolved one."""
        documented = TEMPLATE_PLACEHOLDERS[self.template_id]
        extra = set(values) - documented
        if extra:
            raise InvalidInput(
                f"template {self.template_id!r} got undocumented values {sorted(extra)}"
            )
        rendered = []
        for part in (self.system_text, self.user_text):
            try:
                rendered.append(Template(part).substitute({k: str(v) for k, v in values.items()}))
            except KeyError as exc:
                raise InvalidInput(
                    f"template {self.template_id!r} missing value for placeholder {exc}"
                ) from exc
        return rendered[0], rendered[1]


def _parse_template(template_id: str, text: str) -> PromptTemplate:
    if _SEPARATOR not in text:
        raise InvalidInput(f"template {template_id!r} lacks the system/user separator")
    system_text, user_text = text.split(_SEPARATOR, 1)
    template = PromptTemplate(template_id, system_text.strip("\n"), user_text.strip("\n"))
    undocumented = template.placeholders - TEMPLATE_PLACEHOLDERS[template_id]
    if undocumented:
        raise InvalidInput(
            f"template {template_id!r} references undocumented placeholders "
            f"{sorted(undocumented)}"
        )
    return template


class TemplateSet:
    """All eight prompt templates, loaded once from a directory."""

    def __init__(self, templates: dict[str, PromptTemplate]):
        missing = set(TEMPLATE_IDS) - set(templates)
        if missing:
            raise InvalidInput(f"missing templates: {sorted(missing)}")
        self._templates = templates

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        """Load from a directory, defaulting to the bundled template files."""
        templates = {}
        if directory is None:
            root = resources.files("tutorforge").joinpath("data/templates")
            for template_id in TEMPLATE_IDS:
                text = root.joinpath(f"{template_id}.txt").read_text(encoding="utf-8")
                templates[template_id] = _parse_template(template_id, text)
        else:
            root = Path(directory)
            for template_id in TEMPLATE_IDS:
                text = (root / f"{template_id}.txt").read_text(encoding="utf-8")
                templates[template_id] = _parse_template(template_id, text)
        return cls(templates)

    def get(self, template_id: str) -> PromptTemplate:
        return self._templates[template_id]

    def render(self, template_id: str, **values: object) -> tuple[str, str]:
        return self.get(template_id).render(**values)
