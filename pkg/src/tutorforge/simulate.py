"""Deterministic scripted learners that drive sessions over the HTTP API.

Four policies mirror strategies real learners showed: answering straight
from the questions, reading the whole text first, mixing in a planted
factual error and then revising it, and leaning on the help button.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import httpx
import uvicorn

from .bundled import bundled_answers, bundled_lesson, bundled_script, fixture_dir
from .engine import SessionSummary
from .errors import InvalidInput, TutorforgeError
from .eventlog import EventLog, rehydrate_session
from .gateway import FixtureStore, Gateway
from .service import ContentStore, create_app
from .study import load_survey

POLICY_IDS = ("question_driven", "read_first", "confused", "help_seeker")

MAX_STEPS_PER_SESSION = 500


@dataclass(frozen=True)
class LearnerPolicy:
    policy_id: str
    read_delay_events: int = 0
    flaw_turns: frozenset = frozenset()
    help_turns: frozenset = frozenset()
    answers: dict = field(default_factory=dict)  # question_id -> answer variants
    posttest_choices: dict = field(default_factory=dict)
    anchors: tuple[str, ...] = ()

    def __post_init__(self):
        rules = {
            "question_driven": (self.read_delay_events == 0 and not self.flaw_turns
                                and not self.help_turns),
            "read_first": (self.read_delay_events >= 1 and not self.flaw_turns
                           and not self.help_turns),
            "confused": (self.read_delay_events == 0 and self.flaw_turns
                         and not self.help_turns),
            "help_seeker": (self.read_delay_events == 0 and not self.flaw_turns
                            and self.help_turns),
        }
        if self.policy_id not in rules:
            raise InvalidInput(f"unknown policy {self.policy_id!r}")
        if not rules[self.policy_id]:
            raise InvalidInput(f"parameters inconsistent with policy {self.policy_id!r}")


@dataclass(frozen=True)
class Action:
    kind: str  # send_message | request_help | scroll | answer_posttest | finish
    text: str | None = None
    anchor: str | None = None
    answers: dict | None = None


def make_policy(policy_id: str, *, anchors: tuple[str, ...] = (), **overrides) -> LearnerPolicy:
    """Policy with its canned-answer table and conventional parameters."""
    tables = bundled_answers()
    defaults: dict = {
        "answers": tables["questions"],
        "posttest_choices": tables["posttest"],
        "anchors": anchors or tuple(s[1] for s in bundled_lesson().sections),
    }
    if policy_id == "read_first":
        defaults["read_delay_events"] = len(defaults["anchors"])
    elif policy_id == "confused":
        defaults["flaw_turns"] = frozenset({1})
    elif policy_id == "help_seeker":
        defaults["help_turns"] = frozenset({1, 3})
    defaults.update(overrides)
    return LearnerPolicy(policy_id=policy_id, **defaults)


def next_action(policy: LearnerPolicy, view: dict) -> Action | None:
    """Pure decision function: same view always yields the same action."""
    phase = view["phase"]
    if phase == "done":
        return None
    if phase == "posttest":
        return Action("answer_posttest", answers=dict(policy.posttest_choices))
    if phase == "survey":
        return Action("finish")

    condition = view["condition"]
    if view["scroll_count"] < policy.read_delay_events and policy.anchors:
        index = view["scroll_count"] % len(policy.anchors)
        return Action("scroll", anchor=policy.anchors[index])
    if condition == "reading":
        return Action("finish")

    learner_turns = sum(1 for m in view["transcript"] if m["author"] == "learner")
    action_index = learner_turns + view["help_request_count"] + 1
    question = view["current_question"]
    if question is None:
        return Action("finish")
    table = policy.answers[question["question_id"]]

    if condition == "ruffle_riley":
        if action_index in policy.help_turns:
            return Action("request_help")
        if action_index in policy.flaw_turns and "flawed" in table:
            return Action("send_message", text=table["flawed"])
        if phase == "awaiting_revision":
            return Action("send_message", text=table.get("corrected", table["answer"]))
    return Action("send_message", text=table["answer"])


# ---------------------------------------------------------------------------
# HTTP driver


def _clean_survey(view: dict) -> dict:
    """A tidy survey submission: neutral agreement plus correct attention
    and lookup-denial answers."""
    instrument = load_survey()
    responses = {item["key"]: 5 for item in view["survey"]["aspects"]}
    for key, _prompt, expected in instrument.attention_checks:
        responses[key] = expected
    responses[instrument.lookup_key] = instrument.lookup_denial
    return responses


def run_session(
    client: httpx.Client,
    policy: LearnerPolicy,
    *,
    participant_id: str,
    lesson_id: str,
    condition: str = "ruffle_riley",
    script_id: str | None = None,
    on_step=None,
) -> str:
    """Drive one session to phase=done through the HTTP surface.

    `on_step(session_id)` fires after session creation and after every
    performed action, for callers that snapshot server state as they go.
    """
    body = {"participant_id": participant_id, "lesson_id": lesson_id, "condition": condition}
    if script_id is not None:
        body["script_id"] = script_id
    created = client.post("/sessions", json=body)
    created.raise_for_status()
    session_id = created.json()["session_id"]
    if on_step is not None:
        on_step(session_id)

    for _ in range(MAX_STEPS_PER_SESSION):
        view = client.get(f"/sessions/{session_id}").json()
        action = next_action(policy, view)
        if action is None:
            return session_id
        if action.kind == "send_message":
            client.post(f"/sessions/{session_id}/messages",
                        json={"text": action.text}).raise_for_status()
        elif action.kind == "request_help":
            client.post(f"/sessions/{session_id}/help").raise_for_status()
        elif action.kind == "scroll":
            client.post(
                f"/sessions/{session_id}/events",
                json={"kind": "scroll",
                      "payload": {"anchor": action.anchor, "viewport_fraction": 1.0}},
            ).raise_for_status()
        elif action.kind == "answer_posttest":
            client.post(f"/sessions/{session_id}/posttest",
                        json={"answers": action.answers}).raise_for_status()
        elif action.kind == "finish":
            if view["phase"] == "survey":
                client.post(f"/sessions/{session_id}/survey",
                            json={"responses": _clean_survey(view)}).raise_for_status()
                if on_step is not None:
                    on_step(session_id)
            client.post(f"/sessions/{session_id}/finish").raise_for_status()
        else:
            raise TutorforgeError(f"unknown action {action.kind!r}")
        if on_step is not None:
            on_step(session_id)
    raise TutorforgeError(f"session {session_id} did not finish "
                          f"within {MAX_STEPS_PER_SESSION} steps")


def summarize_session(data_dir, session_id: str) -> SessionSummary:
    from .engine import session_summary

    log = EventLog(data_dir)
    return session_summary(rehydrate_session(log.read_events(session_id)))


class ServerThread:
    """A uvicorn server on an ephemeral loopback port, run in a thread."""

    def __init__(self, app, host: str = "127.0.0.1", port: int = 0):
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.host = host

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.monotonic() + 10.0
        while not self.server.started:
            if time.monotonic() > deadline:
                raise TutorforgeError("server did not start within 10s")
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://{self.host}:{port}"

    def __exit__(self, *exc_info) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10.0)


def default_content_store() -> ContentStore:
    store = ContentStore()
    store.add_lesson(bundled_lesson())
    store.add_script(bundled_script("llm"), default_for=("llm_qa", "ruffle_riley"))
    store.add_script(bundled_script("teacher"), default_for=("teacher_qa",))
    return store


def run_simulation(
    policy_id: str,
    sessions: int,
    data_dir,
    *,
    provider: str = "replay",
    condition: str = "ruffle_riley",
    fixtures: str | None = None,
    gateway: Gateway | None = None,
) -> list[SessionSummary]:
    """Spin up the service on loopback and drive N sessions end to end."""
    store = default_content_store()
    if gateway is None:
        gateway = Gateway(provider, fixtures=FixtureStore(fixtures or fixture_dir()))
    app = create_app(store, gateway, data_dir)
    policy = make_policy(policy_id)
    lesson_id = bundled_lesson().lesson_id
    summaries = []
    with ServerThread(app) as base_url:
        with httpx.Client(base_url=base_url, timeout=30.0) as client:
            for i in range(sessions):
                session_id = run_session(
                    client, policy,
                    participant_id=f"sim-{policy_id}-{i + 1:03d}",
                    lesson_id=lesson_id, condition=condition,
                )
                summaries.append(summarize_session(data_dir, session_id))
    return summaries
