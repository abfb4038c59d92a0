"""Judge backends: an HTTP chat-completions client and a scripted mock."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "JUDGE_API_KEY"


@dataclass(frozen=True)
class JudgeParams:
    model: str = "gpt-4o"
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


class JudgeTransportError(Exception):
    """The backend could not produce a reply."""


class Timeout(JudgeTransportError):
    pass


class HttpStatus(JudgeTransportError):
    def __init__(self, code: int):
        super().__init__(f"judge endpoint returned HTTP {code}")
        self.code = code


class MalformedResponse(JudgeTransportError):
    pass


class ScriptExhausted(JudgeTransportError):
    pass


@runtime_checkable
class JudgeBackend(Protocol):
    max_in_flight: int

    def complete(self, system_text: str, user_text: str, params: JudgeParams) -> str: ...


def _retryable(exc: Exception) -> bool:
    if isinstance(exc, HttpStatus):
        return exc.code == 429 or exc.code >= 500
    return isinstance(exc, (Timeout, httpx.TransportError))


class HttpJudge:
    """Chat-completions client with bounded retries and an in-flight cap.

    The bearer token is held privately and never included in log records or
    exception messages.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None,
        *,
        timeout_s: float = 60.0,
        retries: int = 2,
        max_in_flight: int = 4,
        backoff_s: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.endpoint = endpoint
        self._api_key = api_key
        self.timeout_s = timeout_s
        self.retries = retries
        self.max_in_flight = max_in_flight
        self.backoff_s = backoff_s
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def __repr__(self):
        return f"HttpJudge(endpoint={self.endpoint!r}, retries={self.retries}, max_in_flight={self.max_in_flight})"

    def close(self):
        self._client.close()

    def _post_once(self, body: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = self._client.post(self.endpoint, json=body, headers=headers)
        except httpx.TimeoutException:
            raise Timeout(f"judge request timed out after {self.timeout_s}s") from None
        except httpx.TransportError as exc:
            raise JudgeTransportError(f"transport failure: {type(exc).__name__}") from None
        if resp.status_code != 200:
            raise HttpStatus(resp.status_code)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponse("reply lacks choices[0].message.content") from None
        if not isinstance(content, str):
            raise MalformedResponse("reply content is not text")
        return content

    def complete(self, system_text: str, user_text: str, params: JudgeParams) -> str:
        body = {
            "model": params.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        with self._slots:
            for attempt in range(self.retries + 1):
                try:
                    return self._post_once(body)
                except JudgeTransportError as exc:
                    if attempt == self.retries or not _retryable(exc):
                        raise
                    delay = self.backoff_s * (2**attempt)
                    logger.info("judge attempt %d failed (%s); retrying in %.2fs", attempt + 1, exc, delay)
                    time.sleep(delay)
        raise AssertionError("unreachable")


def http_complete(
    endpoint: str,
    auth: str | None,
    system_text: str,
    user_text: str,
    params: JudgeParams = JudgeParams(),
    **client_kw,
) -> str:
    judge = HttpJudge(endpoint, auth, **client_kw)
    try:
        return judge.complete(system_text, user_text, params)
    finally:
        judge.close()


@dataclass(frozen=True)
class ScriptEntry:
    reply: str
    match: str | None = None


@dataclass
class MockScript:
    entries: Sequence[ScriptEntry]
    exhaustion: str = "repeat_last"  # or "error"
    _used: list[bool] = field(default_factory=list, repr=False)
    _last: dict[int, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.exhaustion not in ("repeat_last", "error"):
            raise ValueError("exhaustion must be 'repeat_last' or 'error'")
        self.entries = list(self.entries)
        self._used = [False] * len(self.entries)

    @classmethod
    def from_jsonl(cls, text: str, exhaustion: str = "repeat_last") -> "MockScript":
        entries = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries.append(ScriptEntry(reply=obj["reply"], match=obj.get("match")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"mock script line {line_no}: {exc}") from None
        return cls(entries, exhaustion)

    @classmethod
    def load(cls, path: str | Path, exhaustion: str = "repeat_last") -> "MockScript":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"), exhaustion)

    def next_reply(self, user_text: str) -> str:
        matching = [i for i, e in enumerate(self.entries) if e.match is None or e.match in user_text]
        for i in matching:
            if not self._used[i]:
                self._used[i] = True
                return self.entries[i].reply
        if self.exhaustion == "repeat_last" and matching:
            return self.entries[matching[-1]].reply
        raise ScriptExhausted("mock script has no reply left for this request")


class MockJudge:
    """Deterministic backend replaying a MockScript; requests are serialized."""

    max_in_flight = 1

    def __init__(self, script: MockScript):
        self.script = script
        self.requests: list[tuple[str, str]] = []
        self._lock = threading.Lock()

    def complete(self, system_text: str, user_text: str, params: JudgeParams) -> str:
        with self._lock:
            self.requests.append((system_text, user_text))
            return self.script.next_reply(user_text)


def mock_complete(script: MockScript, system_text: str, user_text: str, params: JudgeParams = JudgeParams()) -> str:
    return script.next_reply(user_text)
