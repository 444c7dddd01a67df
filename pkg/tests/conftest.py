from __future__ import annotations

import itertools

import pytest

from tutorforge.bundled import bundled_answers, bundled_lesson, bundled_script, fixture_dir
from tutorforge.gateway import CompletionResponse, FixtureStore, Gateway


def _no_network(req):
    raise AssertionError("transport must never be reached in replay mode")


@pytest.fixture()
def lesson():
    return bundled_lesson()


@pytest.fixture()
def llm_script():
    return bundled_script("llm")


@pytest.fixture()
def teacher_script():
    return bundled_script("teacher")


@pytest.fixture()
def answers():
    return bundled_answers()


@pytest.fixture()
def replay_gateway():
    """Replay gateway over the bundled fixtures; blows up on any wire call."""
    return Gateway("replay", fixtures=FixtureStore(fixture_dir()), transport=_no_network)


class FakeGateway:
    """Duck-typed gateway for engine unit tests: a function of the request."""

    def __init__(self, responder):
        self.responder = responder
        self.requests = []

    def complete(self, req):
        self.requests.append(req)
        content = self.responder(req)
        return CompletionResponse(content=content,
                                  finish_reason="stop" if content else "error")


@pytest.fixture()
def fake_gateway_factory():
    return FakeGateway


@pytest.fixture()
def ticking_clock():
    """Millisecond clock advancing 1s per call."""
    counter = itertools.count(start=1_700_000_000_000, step=1000)
    return lambda: next(counter)


# ---------------------------------------------------------------------------
# One PASS/FAIL line per acceptance criterion at the end of the run.

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_acceptance_outcomes):
        outcome = _acceptance_outcomes[nodeid]
        label = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label}  {nodeid.split('::')[-1]}")
