"""Access to the bundled fixture content (lesson, scripts, answers, replay
fixtures)."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .model import LessonText, TutoringScript, parse_lesson, parse_script

LESSON_FILE = "lesson_cell_organelles.json"
SCRIPT_FILES = {"llm": "script_llm.json", "teacher": "script_teacher.json"}


def data_path(name: str = "") -> Path:
    root = Path(str(resources.files("tutorforge").joinpath("data")))
    return root / name if name else root


def bundled_lesson() -> LessonText:
    return parse_lesson(data_path(LESSON_FILE).read_bytes())


def bundled_script(kind: str = "llm") -> TutoringScript:
    return parse_script(data_path(SCRIPT_FILES[kind]).read_bytes())


def bundled_answers() -> dict:
    return json.loads(data_path("answers.json").read_text(encoding="utf-8"))


def fixture_dir() -> Path:
    return data_path("fixtures")
