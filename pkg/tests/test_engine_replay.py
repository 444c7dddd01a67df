"""Engine operations driven directly against the bundled replay fixtures.

These walk the same provider exchanges the end-to-end flows record, but pin
the individual operations: judge verdicts, help replies, QA grading, and the
final-question transition.
"""

from __future__ import annotations

import pytest

from tutorforge.engine import (
    ChatMessage,
    detect_misconception,
    handle_help_request,
    handle_learner_message,
    handle_qa_answer,
    judge_coverage,
    start_session,
)

NOW = 1_700_000_000_000


def _answer(answers, qid, variant="answer"):
    return answers["questions"][qid][variant]


@pytest.fixture()
def rr_state(lesson, llm_script):
    state, _ = start_session(lesson, llm_script, "ruffle_riley",
                             session_id="replay-walk", participant_id="p",
                             now_ms=NOW)
    return state


def test_coverage_judge_replay_full_answer(rr_state, llm_script, answers, replay_gateway):
    """A statement of both expected facts judges both expectations covered."""
    q1 = llm_script.questions[0]
    pending = ChatMessage(turn_id=2, author="learner",
                          content=_answer(answers, "q1"),
                          cause="learner_input", timestamp=NOW)
    verdict = judge_coverage(q1, rr_state.transcript[1:] + (pending,), replay_gateway)
    assert verdict.coverage == {"q1-e1": True, "q1-e2": True}


def test_misconception_judge_replay_flags_planted_error(lesson, llm_script, answers,
                                                        replay_gateway):
    verdict = detect_misconception(lesson, llm_script.questions[0],
                                   _answer(answers, "q1", "flawed"), replay_gateway)
    assert verdict.flagged is True
    assert verdict.feedback


def test_misconception_judge_replay_accepts_correct_answer(lesson, llm_script, answers,
                                                           replay_gateway):
    verdict = detect_misconception(lesson, llm_script.questions[0],
                                   _answer(answers, "q1"), replay_gateway)
    assert verdict.flagged is False


def test_last_question_turn_reaches_posttest(rr_state, answers, replay_gateway):
    """Covering the final question's expectations ends the chat phase."""
    state = rr_state
    for qid in ("q1", "q2"):
        state = handle_learner_message(state, _answer(answers, qid),
                                       replay_gateway, now_ms=NOW).state
    result = handle_learner_message(state, _answer(answers, "q3"),
                                    replay_gateway, now_ms=NOW)
    assert result.state.phase == "posttest"
    assert result.messages[-1].cause == "session_bookend"
    assert result.state.all_covered()


def test_help_at_question_two_replay(rr_state, answers, replay_gateway):
    """The help_seeker exchange: help at q1, answer, help again at q2."""
    state = handle_help_request(rr_state, replay_gateway, now_ms=NOW).state
    assert state.help_request_count == 1
    state = handle_learner_message(state, _answer(answers, "q1"),
                                   replay_gateway, now_ms=NOW).state
    assert state.coverage.current_question_index == 1
    result = handle_help_request(state, replay_gateway, now_ms=NOW)
    assert result.state.help_request_count == 2
    assert result.messages[0].author == "riley"
    assert result.state.coverage.current_question_index == 1  # unchanged by help


def test_revision_after_flag_replay(rr_state, answers, replay_gateway):
    """The confused exchange: planted error, Riley's flag, accepted revision."""
    result = handle_learner_message(rr_state, _answer(answers, "q1", "flawed"),
                                    replay_gateway, now_ms=NOW)
    assert result.state.phase == "awaiting_revision"
    assert result.messages[-1].cause == "misconception_flag"
    corrected = handle_learner_message(result.state, _answer(answers, "q1", "corrected"),
                                       replay_gateway, now_ms=NOW)
    assert corrected.state.phase == "active"
    assert corrected.state.coverage.current_question_index == 1


def test_qa_grading_replay(lesson, teacher_script, answers, replay_gateway):
    """A canned answer matching the solution grades correct, and the reply
    quotes the sample solution."""
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="replay-qa", participant_id="p", now_ms=NOW)
    result = handle_qa_answer(state, _answer(answers, "tq1"), replay_gateway, now_ms=NOW)
    message = result.messages[-1]
    assert "Correct" in message.content
    assert teacher_script.questions[0].solution_text in message.content
