#!/usr/bin/env python3
"""Regenerate the bundled replay fixtures and golden script files.

Runs the induction pipeline and every scripted learner policy in record mode
against a deterministic rule-based transport, so the whole fixture set can be
rebuilt from scratch at any time. Run from the repository root after an
editable install:

    python3 scripts/record_fixtures.py
"""

from __future__ import annotations

import re
import sys
import tempfile
from pathlib import Path

from tutorforge.bundled import bundled_lesson, data_path, fixture_dir
from tutorforge.gateway import CompletionRequest, CompletionResponse, FixtureStore, Gateway
from tutorforge.induction import InductionConfig, compile_script
from tutorforge.model import (
    Expectation,
    ScriptQuestion,
    TutoringScript,
    emit_script,
    validate_script,
)
from tutorforge.simulate import POLICY_IDS, run_simulation

# ---------------------------------------------------------------------------
# The content the "provider" produces for the bundled lesson.

QUESTION_TEXTS = [
    "What role does the nucleus play in a eukaryotic cell, and how does its envelope support that role?",
    "How do mitochondria supply the cell with usable energy?",
    "What do ribosomes build, and where in the cell do they work?",
]

SOLUTIONS = {
    QUESTION_TEXTS[0]: (
        "The nucleus stores the cell's DNA and serves as its control center, "
        "directing the cell's activities. The nuclear envelope separates the DNA "
        "from the cytoplasm, and its pores regulate which molecules move in and out."
    ),
    QUESTION_TEXTS[1]: (
        "Mitochondria convert the energy stored in nutrients into ATP through "
        "cellular respiration. Their inner membrane is folded into cristae, which "
        "increases the surface area available for ATP production."
    ),
    QUESTION_TEXTS[2]: (
        "Ribosomes assemble proteins by linking amino acids in the order specified "
        "by messenger RNA. They work free in the cytoplasm or attached to the rough "
        "endoplasmic reticulum."
    ),
}

EXPECTATION_TEXTS = {
    QUESTION_TEXTS[0]: [
        "The nucleus stores the cell's genetic material and directs the cell's activities.",
        "The nuclear envelope separates the DNA from the cytoplasm and its pores regulate traffic in and out.",
    ],
    QUESTION_TEXTS[1]: [
        "Mitochondria convert energy from nutrients into ATP through cellular respiration.",
        "The folded inner membrane, the cristae, increases the surface area available for ATP production.",
    ],
    QUESTION_TEXTS[2]: [
        "Ribosomes assemble proteins by linking amino acids in the order messenger RNA specifies.",
        "Ribosomes work free in the cytoplasm or attached to the rough endoplasmic reticulum.",
    ],
}

# keyphrases the coverage "judge" requires in the learner's own words
COVERAGE_KEYPHRASES = {
    "q1-e1": ["stores", "directs"],
    "q1-e2": ["envelope", "pores"],
    "q2-e1": ["atp", "respiration"],
    "q2-e2": ["cristae"],
    "q3-e1": ["amino acids"],
    "q3-e2": ["cytoplasm", "endoplasmic reticulum"],
    "tq1-e1": ["dna"],
    "tq1-e2": ["envelope", "pores"],
    "tq2-e1": ["atp", "respiration"],
    "tq2-e2": ["cristae"],
    "tq3-e1": ["amino acids"],
    "tq3-e2": ["cytoplasm", "endoplasmic reticulum"],
}

MISCONCEPTION_FEEDBACK = {
    "The nucleus is the cell's power plant. It burns nutrients to make ATP for everything the cell does.": (
        "Careful: the nucleus is not the cell's power plant. Energy production "
        "happens in the mitochondria, so take another look at the nucleus section "
        "and revise your explanation."
    ),
    "Mitochondria mostly store the cell's genetic information and hand it on when the cell divides.": (
        "Hmm, mitochondria do not store the cell's genetic information; that is "
        "the nucleus's job. Revisit the mitochondria section and revise your explanation."
    ),
    "Ribosomes break proteins down into amino acids so the cell can recycle them.": (
        "Actually, ribosomes build proteins rather than break them down. Have "
        "another look at the ribosome section and revise your explanation."
    ),
}

HELP_POINTERS = {
    QUESTION_TEXTS[0]: (
        "Take a look at the section on the nucleus: notice what it stores and what "
        "the envelope with its little gates does for the cell."
    ),
    QUESTION_TEXTS[1]: (
        "Peek at the mitochondria section: follow what cellular respiration produces "
        "and what those inner folds are for."
    ),
    QUESTION_TEXTS[2]: (
        "Check the ribosome section: watch what gets linked together and the two "
        "places that work happens."
    ),
}

GRADED_CORRECT = set()  # filled below from the answers table

TEACHER_QUESTIONS = [
    ScriptQuestion(
        question_id="tq1",
        question_text="Name the organelle that holds the cell's DNA and explain what the nuclear envelope does.",
        solution_text=(
            "The nucleus holds the cell's DNA. The nuclear envelope is the double "
            "membrane around it; it separates the DNA from the cytoplasm and its "
            "pores control what moves in and out."
        ),
        expectations=(
            Expectation("tq1-e1", "The nucleus holds the cell's DNA."),
            Expectation("tq1-e2", "The nuclear envelope separates the DNA from the cytoplasm and controls traffic through its pores."),
        ),
    ),
    ScriptQuestion(
        question_id="tq2",
        question_text="Explain how a mitochondrion's structure helps it produce energy.",
        solution_text=(
            "A mitochondrion converts nutrient energy into ATP through cellular "
            "respiration. Its inner membrane is folded into cristae, and the folds "
            "increase the surface area available for ATP production."
        ),
        expectations=(
            Expectation("tq2-e1", "Mitochondria make ATP through cellular respiration."),
            Expectation("tq2-e2", "Cristae increase the membrane surface available for ATP production."),
        ),
    ),
    ScriptQuestion(
        question_id="tq3",
        question_text="Describe the two places ribosomes work and what they make.",
        solution_text=(
            "Ribosomes make proteins by joining amino acids in the order given by "
            "messenger RNA. They work free in the cytoplasm or attached to the "
            "rough endoplasmic reticulum."
        ),
        expectations=(
            Expectation("tq3-e1", "Ribosomes join amino acids into proteins following messenger RNA."),
            Expectation("tq3-e2", "Ribosomes work free in the cytoplasm or on the rough endoplasmic reticulum."),
        ),
    ),
]


def _prompt_text(req: CompletionRequest) -> str:
    return "\n".join(content for _, content in req.messages)


def _respond(content: str) -> CompletionResponse:
    return CompletionResponse(content=content, finish_reason="stop",
                              prompt_tokens=0, output_tokens=0)


def scripted_transport(req: CompletionRequest) -> CompletionResponse:
    """Deterministic stand-in for a live provider, keyed off the template
    openings and the bundled content tables."""
    prompt = _prompt_text(req)
    system = req.messages[0][1]

    if system.startswith("You write review questions"):
        lines = [f"{i + 1}. {q}" for i, q in enumerate(QUESTION_TEXTS)]
        return _respond("\n".join(lines))

    if system.startswith("You write model solutions"):
        for question, solution in SOLUTIONS.items():
            if question in prompt:
                return _respond(solution)
        raise AssertionError("solution request for an unknown question")

    if system.startswith("You break a model solution"):
        for question, expectations in EXPECTATION_TEXTS.items():
            if question in prompt:
                return _respond("\n".join(f"- {e}" for e in expectations))
        raise AssertionError("expectations request for an unknown question")

    if system.startswith("You are grading which expected points"):
        match = re.search(
            r"Expected points:\n(.*?)\n\nConversation for the current question:\n(.*?)"
            r"\n\nFor each expected point",
            prompt, re.DOTALL,
        )
        assert match, "coverage prompt shape changed"
        ids = re.findall(r"^- (\S+):", match.group(1), re.MULTILINE)
        learner_text = " ".join(
            line[len("Learner: "):] for line in match.group(2).splitlines()
            if line.startswith("Learner: ")
        ).lower()
        lines = []
        for eid in ids:
            phrases = COVERAGE_KEYPHRASES.get(eid, [])
            covered = bool(phrases) and all(p in learner_text for p in phrases)
            lines.append(f"EXPECTATION {eid}: {'COVERED' if covered else 'NOT_COVERED'}")
        return _respond("\n".join(lines))

    if system.startswith("You check a learner's explanation"):
        for flawed, feedback in MISCONCEPTION_FEEDBACK.items():
            if flawed in prompt:
                return _respond(f"VERDICT: FLAW\nFEEDBACK: {feedback}")
        return _respond("VERDICT: OK")

    if system.startswith("You grade a learner's short answer"):
        answer = re.search(r"Learner's answer: (.*?)\n\nOutput exactly", prompt, re.DOTALL)
        assert answer, "grader prompt shape changed"
        text = answer.group(1).strip()
        if text in GRADED_CORRECT:
            return _respond("GRADE: CORRECT")
        return _respond("GRADE: PARTIALLY_CORRECT")

    if system.startswith("You are Riley"):
        for question, pointer in HELP_POINTERS.items():
            if question in prompt:
                return _respond(pointer)
        return _respond("Happy to help! Focus on the section the current question is about.")

    if system.startswith("You are Ruffle"):
        return _respond("That's interesting! Could you tell me a bit more about that part?")

    raise AssertionError(f"unrecognized prompt opening: {system[:60]!r}")


def main() -> int:
    import json

    answers_doc = json.loads(data_path("answers.json").read_text(encoding="utf-8"))
    for table in answers_doc["questions"].values():
        GRADED_CORRECT.add(table["answer"])

    lesson = bundled_lesson()
    fixtures = FixtureStore(fixture_dir())
    gateway = Gateway("record", fixtures=fixtures, transport=scripted_transport)

    # Golden induced script (also the default script the service runs with).
    script = compile_script(lesson, InductionConfig(), gateway)
    assert validate_script(script, lesson).ok
    data_path("script_llm.json").write_bytes(emit_script(script))
    print(f"wrote script_llm.json ({len(script.questions)} questions)")

    teacher = TutoringScript(
        script_id=f"{lesson.lesson_id}-teacher",
        lesson_id=lesson.lesson_id,
        source="teacher_authored",
        questions=tuple(TEACHER_QUESTIONS),
    )
    assert validate_script(teacher, lesson).ok
    data_path("script_teacher.json").write_bytes(emit_script(teacher))
    print("wrote script_teacher.json")

    # Record every completion the scripted learner flows need.
    flows = [(policy, "ruffle_riley") for policy in POLICY_IDS]
    flows += [("question_driven", "llm_qa"), ("question_driven", "teacher_qa"),
              ("read_first", "reading")]
    for policy_id, condition in flows:
        with tempfile.TemporaryDirectory() as tmp:
            summaries = run_simulation(policy_id, 1, tmp, condition=condition,
                                       gateway=gateway)
            summary = summaries[0]
            print(f"recorded {policy_id}/{condition}: "
                  f"turns={summary.learner_turns} help={summary.help_request_count}")

    print(f"fixture files: {len(list(fixture_dir().glob('*.json')))}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
