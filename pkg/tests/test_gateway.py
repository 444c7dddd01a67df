from __future__ import annotations

import pytest

from tutorforge.errors import FixtureMiss, InvalidInput, ProviderFailure
from tutorforge.gateway import (
    CompletionRequest,
    CompletionResponse,
    FixtureStore,
    Gateway,
    TokenBucket,
    TransientProviderError,
    fingerprint,
)


def make_request(**overrides) -> CompletionRequest:
    fields = dict(
        model_profile="judge",
        messages=(("system", "You judge things."), ("user", "Judge this learner text.")),
        temperature=0.0,
        max_output_tokens=256,
    )
    fields.update(overrides)
    return CompletionRequest(**fields)


# ---------------------------------------------------------------------------
# fingerprint


def test_fingerprint_deterministic():
    assert fingerprint(make_request()) == fingerprint(make_request())


def test_fingerprint_fixed_length():
    short = make_request()
    long = make_request(messages=(("system", "s" * 5000), ("user", "u" * 5000)))
    assert len(fingerprint(short)) == len(fingerprint(long)) == 64


def test_fingerprint_includes_temperature():
    assert fingerprint(make_request(temperature=0.0)) != fingerprint(make_request(temperature=0.7))


def test_fingerprint_perturbation_corpus():
    """1000 single-character perturbations of the user message: no collisions."""
    base_text = "The nucleus stores DNA and directs activity. " * 23  # > 1000 chars
    base = make_request(messages=(("system", "sys"), ("user", base_text)))
    digests = {fingerprint(base)}
    for i in range(1000):
        mutated = base_text[:i] + chr(ord(base_text[i]) + 1) + base_text[i + 1:]
        digests.add(fingerprint(make_request(messages=(("system", "sys"), ("user", mutated)))))
    assert len(digests) == 1001


def test_request_validation():
    with pytest.raises(InvalidInput):
        make_request(messages=()).validate()
    with pytest.raises(InvalidInput):
        make_request(messages=(("user", "hello"),)).validate()
    with pytest.raises(InvalidInput):
        make_request(temperature=3.0).validate()
    with pytest.raises(InvalidInput):
        make_request(max_output_tokens=0).validate()


def test_response_invariant():
    with pytest.raises(InvalidInput):
        CompletionResponse(content="", finish_reason="stop")
    CompletionResponse(content="", finish_reason="error")


# ---------------------------------------------------------------------------
# modes


def test_replay_hit_and_miss(tmp_path):
    store = FixtureStore(tmp_path)
    req = make_request()
    store.put(fingerprint(req), req, CompletionResponse(content="recorded", finish_reason="stop"))

    def explode(_req):
        raise AssertionError("no network in replay")

    gw = Gateway("replay", fixtures=store, transport=explode)
    assert gw.complete(req).content == "recorded"
    assert gw.stats.transport_calls == 0

    with pytest.raises(FixtureMiss) as err:
        gw.complete(make_request(temperature=0.5))
    assert len(err.value.fingerprint) == 64
    assert "Judge this learner" in str(err.value)


def test_record_mode_idempotent(tmp_path):
    calls = []

    def transport(req):
        calls.append(req)
        return CompletionResponse(content="fresh", finish_reason="stop")

    store = FixtureStore(tmp_path)
    gw = Gateway("record", fixtures=store, transport=transport)
    req = make_request()
    first = gw.complete(req)
    path = store.path_for(fingerprint(req))
    recorded_bytes = path.read_bytes()
    second = gw.complete(req)
    assert first == second
    assert len(calls) == 1  # second call served from the fixture
    assert path.read_bytes() == recorded_bytes


def test_fixture_never_overwritten(tmp_path):
    store = FixtureStore(tmp_path)
    req = make_request()
    fp = fingerprint(req)
    store.put(fp, req, CompletionResponse(content="first", finish_reason="stop"))
    store.put(fp, req, CompletionResponse(content="second", finish_reason="stop"))
    assert store.get(fp).content == "first"


def test_live_retries_with_backoff():
    attempts = []
    sleeps = []

    def flaky(req):
        attempts.append(1)
        if len(attempts) < 3:
            raise TransientProviderError("429")
        return CompletionResponse(content="ok", finish_reason="stop")

    gw = Gateway("live", transport=flaky, sleep=sleeps.append)
    assert gw.complete(make_request()).content == "ok"
    assert len(attempts) == 3
    assert sleeps == [1.0, 2.0]


def test_live_exhausts_retries():
    def always_down(req):
        raise TransientProviderError("503")

    gw = Gateway("live", transport=always_down, sleep=lambda _s: None)
    with pytest.raises(ProviderFailure):
        gw.complete(make_request())
    assert gw.stats.transport_calls == 3


def test_nonretryable_provider_error():
    def rejected(req):
        raise ProviderFailure("HTTP 401")

    gw = Gateway("live", transport=rejected, sleep=lambda _s: None)
    with pytest.raises(ProviderFailure):
        gw.complete(make_request())
    assert gw.stats.transport_calls == 1


# ---------------------------------------------------------------------------
# token bucket


def test_token_bucket_burst_then_wait():
    now = [0.0]
    sleeps = []

    def clock():
        return now[0]

    def sleep(seconds):
        sleeps.append(seconds)
        now[0] += seconds

    bucket = TokenBucket(30, clock=clock, sleep=sleep)
    for _ in range(30):
        bucket.acquire()
    assert sleeps == []
    bucket.acquire()  # bucket drained: must wait for one token to refill
    assert len(sleeps) == 1
    assert sleeps[0] == pytest.approx(2.0, abs=1e-6)


def test_token_bucket_refills_over_time():
    now = [0.0]
    bucket = TokenBucket(30, clock=lambda: now[0], sleep=lambda s: None)
    for _ in range(30):
        bucket.acquire()
    now[0] += 60.0
    sleeps = []
    bucket.sleep = sleeps.append
    for _ in range(30):
        bucket.acquire()
    assert sleeps == []


# ---------------------------------------------------------------------------
# wire transport


def _fake_wire(monkeypatch, status=200, body=None, capture=None):
    import httpx

    class FakeResponse:
        def __init__(self):
            self.status_code = status
            self.text = "err"

        def json(self):
            return body

    def fake_post(url, json=None, headers=None, timeout=None):
        if capture is not None:
            capture.update({"url": url, "json": json, "headers": headers})
        return FakeResponse()

    monkeypatch.setattr(httpx, "post", fake_post)


def test_http_transport_parses_openai_shape(monkeypatch):
    from tutorforge.gateway import ENV_KEY, ENV_MODEL, ENV_URL, http_transport

    monkeypatch.setenv(ENV_URL, "https://llm.example/v1/chat/completions")
    monkeypatch.setenv(ENV_MODEL, "test-model")
    monkeypatch.setenv(ENV_KEY, "sekrit")
    captured = {}
    _fake_wire(monkeypatch, body={
        "choices": [{"message": {"content": "hello"}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    }, capture=captured)
    resp = http_transport(make_request())
    assert resp.content == "hello"
    assert resp.finish_reason == "stop"
    assert resp.prompt_tokens == 12
    assert captured["json"]["model"] == "test-model"
    assert captured["headers"]["Authorization"] == "Bearer sekrit"
    assert captured["json"]["temperature"] == 0.0


def test_http_transport_maps_429_to_transient(monkeypatch):
    from tutorforge.gateway import ENV_MODEL, ENV_URL, http_transport

    monkeypatch.setenv(ENV_URL, "https://llm.example/v1/chat/completions")
    monkeypatch.setenv(ENV_MODEL, "test-model")
    _fake_wire(monkeypatch, status=429)
    with pytest.raises(TransientProviderError):
        http_transport(make_request())


def test_http_transport_requires_configuration(monkeypatch):
    from tutorforge.gateway import ENV_MODEL, ENV_URL, http_transport

    monkeypatch.delenv(ENV_URL, raising=False)
    monkeypatch.delenv(ENV_MODEL, raising=False)
    with pytest.raises(ProviderFailure):
        http_transport(make_request())
