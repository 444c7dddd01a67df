"""Provider-agnostic chat completion with retries, rate limiting, and replay.

Three modes:
  live    perform the wire call (OpenAI-compatible chat-completions endpoint)
  replay  serve recorded responses keyed by request fingerprint, no network
  record  live call, then persist the response as a fixture

Fixtures are one JSON file per fingerprint and are never overwritten, so a
fixture directory plus a request stream fully determines the outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import FixtureMiss, InvalidInput, ProviderFailure

ROLES = ("system", "user", "assistant")

RETRY_BASE_SECONDS = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 3

DEFAULT_REQUESTS_PER_MINUTE = 30

ENV_URL = "TUTORFORGE_LLM_URL"
ENV_MODEL = "TUTORFORGE_LLM_MODEL"
ENV_KEY = "TUTORFORGE_LLM_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    model_profile: str
    messages: tuple[tuple[str, str], ...]  # (role, content)
    temperature: float
    max_output_tokens: int

    def validate(self) -> None:
        if not self.messages:
            raise InvalidInput("messages must be non-empty")
        if self.messages[0][0] != "system":
            raise InvalidInput("first message must have role=system")
        for role, _ in self.messages:
            if role not in ROLES:
                raise InvalidInput(f"unknown role {role!r}")
        if not (0.0 <= self.temperature <= 2.0):
            raise InvalidInput("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise InvalidInput("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    finish_reason: str  # stop | length | error
    prompt_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.finish_reason == "stop" and not self.content:
            raise InvalidInput("finish_reason=stop requires non-empty content")


def fingerprint(req: CompletionRequest) -> str:
    """Stable hex digest over the request's canonical serialization."""
    req.validate()
    canonical = json.dumps(
        {
            "model_profile": req.model_profile,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
            "temperature": req.temperature,
            "max_output_tokens": req.max_output_tokens,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class FixtureStore:
    """Directory of recorded responses, one file per request fingerprint."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._write_lock = threading.Lock()

    def path_for(self, fp: str) -> Path:
        return self.directory / f"{fp}.json"

    def get(self, fp: str) -> CompletionResponse | None:
        path = self.path_for(fp)
        if not path.exists():
            return None
        doc = json.loads(path.read_text(encoding="utf-8"))
        resp = doc["response"]
        return CompletionResponse(
            content=resp["content"],
            finish_reason=resp["finish_reason"],
            prompt_tokens=resp["usage"]["prompt_tokens"],
            output_tokens=resp["usage"]["output_tokens"],
        )

    def put(self, fp: str, req: CompletionRequest, resp: CompletionResponse) -> None:
        """Persist a fixture; an existing entry is left untouched."""
        with self._write_lock:
            path = self.path_for(fp)
            if path.exists():
                return
            self.directory.mkdir(parents=True, exist_ok=True)
            doc = {
                "fingerprint": fp,
                "request": {
                    "model_profile": req.model_profile,
                    "temperature": req.temperature,
                    "max_output_tokens": req.max_output_tokens,
                    "message_count": len(req.messages),
                    "messages": [
                        {"role": r, "head": c[:200]} for r, c in req.messages
                    ],
                },
                "response": {
                    "content": resp.content,
                    "finish_reason": resp.finish_reason,
                    "usage": {
                        "prompt_tokens": resp.prompt_tokens,
                        "output_tokens": resp.output_tokens,
                    },
                },
            }
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
            tmp.replace(path)


class TokenBucket:
    """Requests-per-minute limiter; one bucket per model profile."""

    def __init__(self, per_minute: int, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.capacity = float(per_minute)
        self.rate = per_minute / 60.0
        self.clock = clock
        self.sleep = sleep
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self.sleep(wait)


def http_transport(req: CompletionRequest) -> CompletionResponse:
    """One wire call against an OpenAI-compatible chat-completions endpoint.

    Endpoint, model name, and auth token come from environment variables so
    deployments can point at any compatible provider.
    """
    import httpx

    url = os.environ.get(ENV_URL)
    model = os.environ.get(ENV_MODEL)
    if not url or not model:
        raise ProviderFailure(f"{ENV_URL} and {ENV_MODEL} must be set for live mode")
    headers = {}
    key = os.environ.get(ENV_KEY)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": model,
        "messages": [{"role": r, "content": c} for r, c in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    }
    response = httpx.post(url, json=payload, headers=headers, timeout=120.0)
    if response.status_code == 429 or response.status_code >= 500:
        raise TransientProviderError(f"HTTP {response.status_code}")
    if response.status_code != 200:
        raise ProviderFailure(f"HTTP {response.status_code}: {response.text[:200]}")
    body = response.json()
    choice = body["choices"][0]
    content = choice["message"]["content"] or ""
    finish = choice.get("finish_reason") or "stop"
    if finish == "stop" and not content:
        finish = "error"
    usage = body.get("usage") or {}
    return CompletionResponse(
        content=content,
        finish_reason=finish,
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        output_tokens=int(usage.get("completion_tokens", 0)),
    )


class TransientProviderError(Exception):
    """Retryable wire failure (rate limit, 5xx, connection trouble)."""


@dataclass
class GatewayStats:
    transport_calls: int = 0
    replay_hits: int = 0
    fixtures_written: int = 0


class Gateway:
    """Shareable completion handle; `complete` may be called concurrently."""

    def __init__(
        self,
        mode: str,
        fixtures: FixtureStore | None = None,
        transport: Callable[[CompletionRequest], CompletionResponse] | None = None,
        requests_per_minute: int = DEFAULT_REQUESTS_PER_MINUTE,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if mode not in ("live", "replay", "record"):
            raise InvalidInput(f"unknown gateway mode {mode!r}")
        if mode in ("replay", "record") and fixtures is None:
            raise InvalidInput(f"mode {mode!r} requires a fixture store")
        self.mode = mode
        self.fixtures = fixtures
        self.transport = transport or http_transport
        self.sleep = sleep
        self.stats = GatewayStats()
        self._buckets: dict[str, TokenBucket] = {}
        self._buckets_lock = threading.Lock()
        self._rpm = requests_per_minute
        self._clock = clock

    def _bucket(self, profile: str) -> TokenBucket:
        with self._buckets_lock:
            bucket = self._buckets.get(profile)
            if bucket is None:
                bucket = TokenBucket(self._rpm, clock=self._clock, sleep=self.sleep)
                self._buckets[profile] = bucket
            return bucket

    def _call_with_retries(self, req: CompletionRequest) -> CompletionResponse:
        self._bucket(req.model_profile).acquire()
        delay = RETRY_BASE_SECONDS
        last: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                self.stats.transport_calls += 1
                return self.transport(req)
            except TransientProviderError as exc:
                last = exc
                if attempt + 1 < MAX_ATTEMPTS:
                    self.sleep(delay)
                    delay *= RETRY_FACTOR
            except ProviderFailure:
                raise
            except Exception as exc:  # connection errors from the HTTP client
                last = exc
                if attempt + 1 < MAX_ATTEMPTS:
                    self.sleep(delay)
                    delay *= RETRY_FACTOR
        raise ProviderFailure(f"provider failed after {MAX_ATTEMPTS} attempts: {last}")

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        req.validate()
        fp = fingerprint(req)

        if self.mode == "replay":
            assert self.fixtures is not None
            found = self.fixtures.get(fp)
            if found is None:
                last_content = req.messages[-1][1]
                raise FixtureMiss(fp, last_content[:200])
            self.stats.replay_hits += 1
            return found

        if self.mode == "record":
            assert self.fixtures is not None
            found = self.fixtures.get(fp)
            if found is not None:
                self.stats.replay_hits += 1
                return found
            resp = self._call_with_retries(req)
            self.fixtures.put(fp, req, resp)
            self.stats.fixtures_written += 1
            return resp

        return self._call_with_retries(req)
