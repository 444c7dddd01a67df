from __future__ import annotations

import re

import pytest

from tutorforge import engine
from tutorforge.engine import (
    FOLLOWUP_CAP,
    TRANSCRIPT_WINDOW,
    TURN_CAP,
    ChatMessage,
    apply_event,
    assemble_agent_prompt,
    detect_misconception,
    fold_session,
    handle_help_request,
    handle_learner_message,
    handle_qa_answer,
    judge_coverage,
    session_summary,
    start_session,
)
from tutorforge.errors import (
    CorruptLog,
    InvalidInput,
    ProviderFailure,
    SessionComplete,
    SessionIncomplete,
)
from tutorforge.events import BehaviorEvent
from tutorforge.templates import (
    SCOPE_INSTRUCTION_RILEY,
    SCOPE_INSTRUCTION_RUFFLE,
    TONE_INSTRUCTION,
)

from .conftest import FakeGateway

NOW = 1_700_000_000_000


def _ids_in_prompt(req) -> list[str]:
    user = req.messages[1][1]
    return re.findall(r"^- (\S+?):", user, re.MULTILINE)


def cover_all(req) -> str:
    return "\n".join(f"EXPECTATION {eid}: COVERED" for eid in _ids_in_prompt(req))


def cover_none(req) -> str:
    return "\n".join(f"EXPECTATION {eid}: NOT_COVERED" for eid in _ids_in_prompt(req))


def rr_responder(coverage=cover_all, misconception=lambda req: "VERDICT: OK",
                 persona_text="Could you tell me more about that?"):
    def respond(req):
        system = req.messages[0][1]
        if system.startswith("You check a learner's explanation"):
            return misconception(req)
        if system.startswith("You are grading which expected points"):
            return coverage(req)
        return persona_text
    return respond


def start_rr(lesson, script, clock=None):
    now = clock() if clock else NOW
    return start_session(lesson, script, "ruffle_riley",
                         session_id="sess-1", participant_id="p-1", now_ms=now)


# ---------------------------------------------------------------------------
# start_session


def test_start_session_ruffle_riley(lesson, llm_script):
    state, events = start_rr(lesson, llm_script)
    assert state.phase == "active"
    assert [m.cause for m in state.transcript] == ["session_bookend", "question_transition"]
    assert state.transcript[1].author == "ruffle"
    assert llm_script.questions[0].question_text in state.transcript[1].content
    assert state.coverage is not None
    assert all(not any(flags.values()) for flags in state.coverage.covered.values())
    assert [e.kind for e in events] == ["session_start", "agent_message", "agent_message"]


def test_start_session_reading(lesson):
    state, events = start_session(lesson, None, "reading",
                                  session_id="s", participant_id="p", now_ms=NOW)
    assert [m.cause for m in state.transcript] == ["session_bookend"]
    assert state.coverage is None
    assert state.script is None


def test_start_session_qa_presents_first_question(lesson, teacher_script):
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="s", participant_id="p", now_ms=NOW)
    assert state.transcript[1].author == "system"
    assert state.transcript[1].cause == "question_transition"
    assert teacher_script.questions[0].question_text in state.transcript[1].content


def test_start_session_missing_script(lesson):
    with pytest.raises(InvalidInput):
        start_session(lesson, None, "llm_qa", session_id="s", participant_id="p", now_ms=NOW)


# ---------------------------------------------------------------------------
# learner turns


def test_full_coverage_turn_advances(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder())
    result = handle_learner_message(state, "I explain everything.", gw, now_ms=NOW)
    assert result.state.coverage.current_question_index == 1
    assert result.messages[-1].cause == "question_transition"
    assert llm_script.questions[1].question_text in result.messages[-1].content
    q1 = llm_script.questions[0].question_id
    assert all(result.state.coverage.covered[q1].values())


def test_session_reaches_posttest_with_three_transitions(lesson, llm_script):
    state, events = start_rr(lesson, llm_script)
    all_events = list(events)
    gw = FakeGateway(rr_responder())
    for turn in range(3):
        result = handle_learner_message(state, f"Answer {turn}.", gw, now_ms=NOW + turn)
        state = result.state
        all_events += list(result.events)
    assert state.phase == "posttest"
    assert state.all_covered()
    transitions = [e for e in all_events
                   if e.kind == "agent_message"
                   and e.payload["cause"] == "question_transition"]
    assert len(transitions) == 3
    bookends = [m for m in state.transcript if m.cause == "session_bookend"]
    assert bookends[-1].author == "ruffle"


def test_misconception_turn(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    coverage_before = state.coverage.covered
    gw = FakeGateway(rr_responder(
        misconception=lambda req: "VERDICT: FLAW\nFEEDBACK: Please check the lesson and revise."))
    result = handle_learner_message(state, "The nucleus makes all the ATP.", gw, now_ms=NOW)
    assert result.state.phase == "awaiting_revision"
    riley = result.messages[-1]
    assert riley.author == "riley"
    assert riley.cause == "misconception_flag"
    assert riley.content == "Please check the lesson and revise."
    assert result.state.coverage.covered == coverage_before
    # Ruffle stayed silent this turn
    assert all(m.author != "ruffle" for m in result.messages)
    # only the misconception judge ran
    assert len(gw.requests) == 1


def test_revision_turn_returns_to_active(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder(
        misconception=lambda req: "VERDICT: FLAW\nFEEDBACK: Revise please."))
    state = handle_learner_message(state, "Wrong claim.", gw, now_ms=NOW).state
    assert state.phase == "awaiting_revision"
    gw_ok = FakeGateway(rr_responder())
    result = handle_learner_message(state, "Corrected explanation.", gw_ok, now_ms=NOW)
    assert result.state.phase == "active"
    assert result.state.coverage.current_question_index == 1


def test_partial_coverage_produces_followup(lesson, llm_script):
    def cover_first_only(req):
        ids = _ids_in_prompt(req)
        return f"EXPECTATION {ids[0]}: COVERED"

    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder(coverage=cover_first_only,
                                  persona_text="What about the envelope?"))
    result = handle_learner_message(state, "It stores DNA and directs things.", gw, now_ms=NOW)
    followup = result.messages[-1]
    assert followup.author == "ruffle"
    assert followup.cause == "coverage_followup"
    assert result.state.coverage.followup_count_current_question == 1
    assert result.state.coverage.current_question_index == 0
    q1 = llm_script.questions[0]
    flags = result.state.coverage.covered[q1.question_id]
    assert flags[q1.expectations[0].expectation_id]
    assert not flags[q1.expectations[1].expectation_id]
    # the follow-up request carried the open expectation to elicit
    persona_requests = [r for r in gw.requests if r.model_profile == "persona"]
    assert len(persona_requests) == 1
    assert q1.expectations[1].text in persona_requests[0].messages[1][1]


def test_coverage_is_monotone_against_flapping_judge(lesson, llm_script):
    def flip_flop(req):
        ids = _ids_in_prompt(req)
        if len(flips) == 0:
            flips.append(1)
            return f"EXPECTATION {ids[0]}: COVERED"
        return cover_none(req)

    flips: list[int] = []
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder(coverage=flip_flop))
    state = handle_learner_message(state, "First part.", gw, now_ms=NOW).state
    q1 = llm_script.questions[0].question_id
    eid = llm_script.questions[0].expectations[0].expectation_id
    assert state.coverage.covered[q1][eid]
    state = handle_learner_message(state, "Unrelated chatter.", gw, now_ms=NOW).state
    assert state.coverage.covered[q1][eid]  # never reverts


def test_followup_cap_forces_advance(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder(coverage=cover_none))
    events = []
    for turn in range(FOLLOWUP_CAP):
        result = handle_learner_message(state, f"ramble {turn}", gw, now_ms=NOW)
        state = result.state
        events += list(result.events)
        assert state.coverage.current_question_index == 0
    assert state.coverage.followup_count_current_question == FOLLOWUP_CAP
    result = handle_learner_message(state, "still rambling", gw, now_ms=NOW)
    state = result.state
    events += list(result.events)
    assert state.coverage.current_question_index == 1
    assert state.forced_advance_count == 1
    forced = [e for e in events if e.kind == "forced_advance"]
    assert len(forced) == 1
    assert forced[0].payload["reason"] == "followup_cap"


def test_turn_cap_bounds_adversarial_judges(lesson, llm_script):
    gw = FakeGateway(rr_responder(
        misconception=lambda req: "VERDICT: FLAW\nFEEDBACK: Still wrong, revise."))
    state, _ = start_rr(lesson, llm_script)
    turns = 0
    while state.phase in ("active", "awaiting_revision"):
        state = handle_learner_message(state, f"wrong again {turns}", gw, now_ms=NOW).state
        turns += 1
        assert turns <= len(llm_script.questions) * TURN_CAP
    assert state.phase == "posttest"
    assert turns == len(llm_script.questions) * TURN_CAP


def test_provider_failure_leaves_state_untouched(lesson, llm_script):
    class Boom:
        def complete(self, req):
            raise ProviderFailure("down")

    state, _ = start_rr(lesson, llm_script)
    with pytest.raises(ProviderFailure):
        handle_learner_message(state, "hello", Boom(), now_ms=NOW)
    assert len(state.transcript) == 2  # learner message was not appended


def test_learner_message_wrong_phase(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder())
    for turn in range(3):
        state = handle_learner_message(state, f"a{turn}", gw, now_ms=NOW).state
    assert state.phase == "posttest"
    with pytest.raises(SessionComplete):
        handle_learner_message(state, "late", gw, now_ms=NOW)


def test_learner_message_validations(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    with pytest.raises(InvalidInput):
        handle_learner_message(state, "   ", FakeGateway(rr_responder()), now_ms=NOW)


# ---------------------------------------------------------------------------
# help requests


def test_help_request_increments_count(lesson, llm_script, replay_gateway):
    state, _ = start_rr(lesson, llm_script)
    result = handle_help_request(state, replay_gateway, now_ms=NOW)
    assert result.state.help_request_count == 1
    assert result.messages[0].author == "riley"
    assert result.messages[0].cause == "help_request"
    assert result.state.coverage.current_question_index == 0
    assert result.state.phase == "active"
    assert [e.kind for e in result.events] == ["help_request", "agent_message"]


def test_two_consecutive_help_requests(lesson, llm_script):
    gw = FakeGateway(rr_responder(persona_text="Here is a pointer."))
    state, _ = start_rr(lesson, llm_script)
    state = handle_help_request(state, gw, now_ms=NOW).state
    state = handle_help_request(state, gw, now_ms=NOW).state
    assert state.help_request_count == 2
    riley_messages = [m for m in state.transcript if m.author == "riley"]
    assert len(riley_messages) == 2
    between = state.transcript[riley_messages[0].turn_id + 1:riley_messages[1].turn_id]
    assert all(m.author != "ruffle" for m in between)


def test_help_during_awaiting_revision(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder(
        misconception=lambda req: "VERDICT: FLAW\nFEEDBACK: Revise."))
    state = handle_learner_message(state, "bad claim", gw, now_ms=NOW).state
    assert state.phase == "awaiting_revision"
    result = handle_help_request(state, FakeGateway(rr_responder()), now_ms=NOW)
    assert result.state.phase == "awaiting_revision"
    assert result.state.help_request_count == 1


def test_help_provider_failure_keeps_count(lesson, llm_script):
    class Boom:
        def complete(self, req):
            raise ProviderFailure("down")

    state, _ = start_rr(lesson, llm_script)
    with pytest.raises(ProviderFailure):
        handle_help_request(state, Boom(), now_ms=NOW)
    assert state.help_request_count == 0


# ---------------------------------------------------------------------------
# judges


def test_judge_coverage_defaults_unmentioned(lesson, llm_script):
    q1 = llm_script.questions[0]
    eid = q1.expectations[0].expectation_id
    gw = FakeGateway(lambda req: f"EXPECTATION {eid}: COVERED")
    transcript = (ChatMessage(0, "learner", "something", "learner_input", NOW),)
    verdict = judge_coverage(q1, transcript, gw)
    assert verdict.coverage[eid] is True
    assert verdict.coverage[q1.expectations[1].expectation_id] is False


def test_judge_coverage_reask_then_fail_safe(lesson, llm_script):
    gw = FakeGateway(lambda req: "I cannot comply with this request.")
    transcript = (ChatMessage(0, "learner", "something", "learner_input", NOW),)
    verdict = judge_coverage(llm_script.questions[0], transcript, gw)
    assert len(gw.requests) == 2  # one re-ask before failing safe
    assert not any(verdict.coverage.values())


def test_judge_coverage_requires_learner_message(llm_script, replay_gateway):
    with pytest.raises(InvalidInput):
        judge_coverage(llm_script.questions[0], (), replay_gateway)


def test_detect_misconception_parsing(lesson, llm_script):
    q1 = llm_script.questions[0]
    ok = detect_misconception(lesson, q1, "fine text",
                              FakeGateway(lambda req: "VERDICT: OK"))
    assert ok.flagged is False
    flawless = detect_misconception(lesson, q1, "text",
                                    FakeGateway(lambda req: "VERDICT: FLAW"))
    assert flawless.flagged is False  # FLAW without feedback reads as OK
    junk = detect_misconception(lesson, q1, "text",
                                FakeGateway(lambda req: "whatever"))
    assert junk.flagged is False
    flagged = detect_misconception(
        lesson, q1, "text",
        FakeGateway(lambda req: "VERDICT: FLAW\nFEEDBACK: That part is wrong."))
    assert flagged.flagged is True
    assert flagged.feedback == "That part is wrong."
    with pytest.raises(InvalidInput):
        detect_misconception(lesson, q1, "  ", FakeGateway(lambda req: "VERDICT: OK"))


# ---------------------------------------------------------------------------
# prompts


def test_ruffle_prompt_contents(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    req = assemble_agent_prompt("ruffle", state)
    prompt = "\n".join(content for _, content in req.messages)
    for question in llm_script.questions:
        for expectation in question.expectations:
            assert expectation.text in prompt
    assert lesson.body not in prompt
    assert TONE_INSTRUCTION in prompt
    assert SCOPE_INSTRUCTION_RUFFLE in prompt
    assert req.temperature == engine.PERSONA_TEMPERATURE


def test_riley_prompt_contents(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    req = assemble_agent_prompt("riley", state)
    prompt = "\n".join(content for _, content in req.messages)
    assert lesson.body in prompt
    for question in llm_script.questions:
        for expectation in question.expectations:
            assert expectation.text not in prompt
    assert TONE_INSTRUCTION in prompt
    assert SCOPE_INSTRUCTION_RILEY in prompt


def test_prompt_windows_last_twenty_messages(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    transcript = tuple(
        ChatMessage(i, "learner", f"message-{i:03d}", "learner_input", NOW + i)
        for i in range(50)
    )
    from dataclasses import replace
    state = replace(state, transcript=transcript)
    req = assemble_agent_prompt("ruffle", state)
    prompt = req.messages[1][1]
    included = [i for i in range(50) if f"message-{i:03d}" in prompt]
    assert included == list(range(50 - TRANSCRIPT_WINDOW, 50))


def test_prompt_requires_rr_condition(lesson):
    state, _ = start_session(lesson, None, "reading",
                             session_id="s", participant_id="p", now_ms=NOW)
    with pytest.raises(InvalidInput):
        assemble_agent_prompt("ruffle", state)


# ---------------------------------------------------------------------------
# QA conditions


def qa_responder(grade="CORRECT"):
    def respond(req):
        assert req.messages[0][1].startswith("You grade a learner's short answer")
        return f"GRADE: {grade}"
    return respond


def test_qa_answer_feedback_contains_solution(lesson, teacher_script):
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="s", participant_id="p", now_ms=NOW)
    gw = FakeGateway(qa_responder("CORRECT"))
    result = handle_qa_answer(state, "The nucleus holds DNA.", gw, now_ms=NOW)
    message = result.messages[-1]
    assert teacher_script.questions[0].solution_text in message.content
    assert "Correct" in message.content
    assert teacher_script.questions[1].question_text in message.content
    assert result.state.coverage.current_question_index == 1


def test_qa_empty_answer_short_circuits(lesson, teacher_script):
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="s", participant_id="p", now_ms=NOW)
    gw = FakeGateway(qa_responder())
    result = handle_qa_answer(state, "   ", gw, now_ms=NOW)
    assert gw.requests == []  # no judge call for an empty answer
    assert "Not quite." in result.messages[-1].content


def test_qa_last_answer_moves_to_posttest(lesson, teacher_script):
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="s", participant_id="p", now_ms=NOW)
    gw = FakeGateway(qa_responder("PARTIALLY_CORRECT"))
    for _ in range(3):
        state = handle_qa_answer(state, "an answer", gw, now_ms=NOW).state
    assert state.phase == "posttest"
    assert state.transcript[-1].cause == "session_bookend"


def test_qa_unparseable_grade_is_incorrect(lesson, teacher_script):
    state, _ = start_session(lesson, teacher_script, "teacher_qa",
                             session_id="s", participant_id="p", now_ms=NOW)
    gw = FakeGateway(lambda req: "mumble")
    result = handle_qa_answer(state, "an answer", gw, now_ms=NOW)
    assert "Not quite." in result.messages[-1].content


# ---------------------------------------------------------------------------
# fold / reconstruction


def test_fold_matches_live_at_every_prefix(lesson, llm_script):
    state, events = start_rr(lesson, llm_script)
    all_events = list(events)
    snapshots = {len(all_events): state}
    gw = FakeGateway(rr_responder())
    for turn in range(3):
        result = handle_learner_message(state, f"turn {turn}", gw, now_ms=NOW + turn)
        state = result.state
        all_events += list(result.events)
        snapshots[len(all_events)] = state
    for k in range(1, len(all_events) + 1):
        folded = fold_session(all_events[:k])
        if k in snapshots:
            assert folded == snapshots[k]


def test_fold_rejects_corrupt_logs(lesson, llm_script):
    _, events = start_rr(lesson, llm_script)
    with pytest.raises(CorruptLog):
        fold_session([])
    with pytest.raises(CorruptLog):
        fold_session(list(events)[1:])  # does not start with session_start
    gap = list(events)
    gap[2] = BehaviorEvent(seq=5, session_id=gap[2].session_id, kind=gap[2].kind,
                           timestamp=gap[2].timestamp, payload=gap[2].payload)
    with pytest.raises(CorruptLog) as err:
        fold_session(gap)
    assert err.value.seq == 5


def test_no_events_after_session_end(lesson):
    state, events = start_session(lesson, None, "reading",
                                  session_id="s", participant_id="p", now_ms=NOW)
    sequence = list(events)
    for kind, payload in (("question_advance", {"to_phase": "posttest"}),
                          ("posttest_answer", {"answers": {}}),
                          ("survey_answer", {"responses": {}}),
                          ("session_end", {})):
        sequence.append(BehaviorEvent(seq=len(sequence), session_id="s", kind=kind,
                                      timestamp=NOW, payload=payload))
    folded = fold_session(sequence)
    assert folded.phase == "done"
    sequence.append(BehaviorEvent(seq=len(sequence), session_id="s", kind="scroll",
                                  timestamp=NOW, payload={"anchor": "a", "viewport_fraction": 1}))
    with pytest.raises(CorruptLog):
        fold_session(sequence)


# ---------------------------------------------------------------------------
# summary


def test_session_summary_definitions(lesson, llm_script):
    state, _ = start_rr(lesson, llm_script)
    gw = FakeGateway(rr_responder())
    for turn in range(3):
        state = handle_learner_message(state, f"a{turn}", gw, now_ms=NOW).state
    with pytest.raises(SessionIncomplete):
        session_summary(state)
    closing = [
        BehaviorEvent(seq=state.event_count, session_id=state.session_id,
                      kind="posttest_answer", timestamp=NOW, payload={"answers": {}}),
        BehaviorEvent(seq=state.event_count + 1, session_id=state.session_id,
                      kind="survey_answer", timestamp=NOW, payload={"responses": {}}),
        BehaviorEvent(seq=state.event_count + 2, session_id=state.session_id,
                      kind="session_end", timestamp=NOW + 90_000, payload={}),
    ]
    for event in closing:
        state = apply_event(state, event)
    summary = session_summary(state)
    assert summary.learner_turns == 3
    assert summary.help_request_count == 0
    assert summary.duration_minutes == 1.5
    assert summary.followups_by_question == (0, 0, 0)


def test_reading_summary_is_empty(lesson):
    state, _ = start_session(lesson, None, "reading",
                             session_id="s", participant_id="p", now_ms=NOW)
    for kind, payload in (("question_advance", {"to_phase": "posttest"}),
                          ("posttest_answer", {"answers": {}}),
                          ("survey_answer", {"responses": {}}),
                          ("session_end", {})):
        state = apply_event(state, BehaviorEvent(
            seq=state.event_count, session_id="s", kind=kind, timestamp=NOW,
            payload=payload))
    summary = session_summary(state)
    assert summary.learner_turns == 0
    assert summary.help_request_count == 0
    assert summary.followups_by_question == ()
