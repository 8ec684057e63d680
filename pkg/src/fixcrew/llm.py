"""Uniform access to chat-completion backends.

Three backends share one interface: a live HTTP chat endpoint, a deterministic
scripted backend for tests, and a replay backend that re-serves the completion
events of a recorded transcript. Recording is not a separate mode: every
:class:`LlmClient` attached to a transcript writer logs one ``completion``
event per call, and that log is what replay consumes.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional, Protocol, Sequence

import requests

from .schemas import SCHEMAS, JsonExtractError, SchemaError, extract_json_object
from .transcript import TranscriptWriter
from .types import InvariantError, _require

DEFAULT_API_KEY_ENV = "LLM_API_KEY"

# A failed structured reply is re-asked with an error explanation at most
# this many times; every re-ask is a real model call and is billed as one.
MAX_REPAIR_ROUNDS = 2


class LlmError(Exception):
    """Base class for model-access failures."""


class TransportError(LlmError):
    """Network failure or timeout that survived all retries."""


class BackendError(LlmError):
    """The backend answered with a non-2xx status or an unreadable body."""

    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned {status}: {body[:300]}")
        self.status = status
        self.body = body


class ScriptExhausted(LlmError):
    """The scripted backend has no further response to serve."""


class ReplayMismatch(LlmError):
    """A replayed request diverged from or over-ran the recorded sequence.

    An LlmError on purpose: sessions degrade replay failures exactly like the
    live transport failures they stand in for, so a recording of a degraded
    session replays to the identical outcome. End-of-replay fidelity is
    checked against the recorded session_end event by the replay command.
    """


class StructuredOutputError(LlmError):
    """Repair rounds exhausted without a schema-valid reply."""

    def __init__(self, schema_id: str, raw_text: str, detail: str):
        super().__init__(f"no valid {schema_id} object after repairs: {detail}")
        self.schema_id = schema_id
        self.raw_text = raw_text
        self.detail = detail


class BackendKind(str, Enum):
    HTTP_CHAT = "http_chat"
    SCRIPTED = "scripted"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        _require(bool(self.content), "message content must be nonempty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role.value, "content": self.content}


def user(content: str) -> ChatMessage:
    return ChatMessage(Role.USER, content)


def assistant(content: str) -> ChatMessage:
    return ChatMessage(Role.ASSISTANT, content)


def system(content: str) -> ChatMessage:
    return ChatMessage(Role.SYSTEM, content)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        _require(self.prompt_tokens >= 0, "prompt_tokens must be >= 0")
        _require(self.completion_tokens >= 0, "completion_tokens must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    backend_kind: BackendKind = BackendKind.SCRIPTED
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.2
    max_tokens: int = 4096
    request_timeout_ms: int = 60_000
    max_retries: int = 2
    api_key_env: str = DEFAULT_API_KEY_ENV

    def __post_init__(self) -> None:
        _require(0.0 <= self.temperature <= 2.0, "temperature must be in [0, 2]")
        _require(self.max_tokens > 0, "max_tokens must be positive")
        _require(self.request_timeout_ms > 0, "request_timeout_ms must be positive")
        _require(self.max_retries >= 0, "max_retries must be >= 0")
        if self.backend_kind is BackendKind.HTTP_CHAT:
            _require(bool(self.endpoint_url), "http_chat backend requires endpoint_url")


def hash_messages(messages: Sequence[ChatMessage]) -> str:
    """Stable hash of a rendered prompt, used to pair replays with records."""
    payload = json.dumps([m.to_dict() for m in messages], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def complete(self, config: ModelConfig, messages: Sequence[ChatMessage]) -> ChatResponse: ...


class ScriptedBackend:
    """Serves a fixed response sequence; one instance per session so the call
    index stays deterministic."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.calls = 0

    def complete(self, config: ModelConfig, messages: Sequence[ChatMessage]) -> ChatResponse:
        if self.calls >= len(self.responses):
            raise ScriptExhausted(
                f"scripted backend exhausted after {len(self.responses)} responses"
            )
        content = self.responses[self.calls]
        self.calls += 1
        return ChatResponse(content=content)


class HttpChatBackend:
    """POSTs the chat body and reads ``choices[0].message.content``.

    Transient failures (network errors, timeouts, 429, 5xx) are retried with
    exponential backoff up to ``max_retries`` extra attempts.
    """

    def __init__(self, session: Optional[requests.Session] = None, sleep: Callable[[float], None] = time.sleep):
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, config: ModelConfig, messages: Sequence[ChatMessage]) -> ChatResponse:
        body = {
            "model": config.model_name,
            "messages": [m.to_dict() for m in messages],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_exc: Optional[Exception] = None
        for attempt in range(config.max_retries + 1):
            if attempt:
                self._sleep(0.5 * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    config.endpoint_url,
                    json=body,
                    headers=headers,
                    timeout=config.request_timeout_ms / 1000.0,
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = BackendError(resp.status_code, resp.text)
                continue
            if not 200 <= resp.status_code < 300:
                raise BackendError(resp.status_code, resp.text)
            return self._parse(resp)
        if isinstance(last_exc, BackendError):
            raise last_exc
        raise TransportError(f"request failed after {config.max_retries + 1} attempts: {last_exc}")

    @staticmethod
    def _parse(resp: requests.Response) -> ChatResponse:
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(resp.status_code, f"malformed completion body: {resp.text[:200]}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            content=content if isinstance(content, str) else "",
            prompt_tokens=int(usage.get("prompt_tokens") or 0),
            completion_tokens=int(usage.get("completion_tokens") or 0),
        )


class ReplayBackend:
    """Re-serves recorded completion events, verifying each request hash."""

    def __init__(self, completion_events: Sequence[dict[str, Any]]):
        self._events = list(completion_events)
        self._index = 0

    def complete(self, config: ModelConfig, messages: Sequence[ChatMessage]) -> ChatResponse:
        if self._index >= len(self._events):
            raise ReplayMismatch(
                f"recording has only {len(self._events)} completions but more were requested"
            )
        event = self._events[self._index]
        expected = event.get("request_hash", "")
        actual = hash_messages(messages)
        if expected != actual:
            raise ReplayMismatch(
                f"request #{self._index} diverged from the recording "
                f"(recorded {expected[:12]}…, got {actual[:12]}…)"
            )
        self._index += 1
        recorded = event.get("response") or {}
        return ChatResponse(
            content=str(recorded.get("content", "")),
            prompt_tokens=int(recorded.get("prompt_tokens") or 0),
            completion_tokens=int(recorded.get("completion_tokens") or 0),
        )


def replay_backend(transcript_path: str) -> ReplayBackend:
    """Build a backend replaying the completion events of a recorded session."""
    from .transcript import read_events

    return ReplayBackend(read_events(transcript_path, kind="completion"))


def _repair_message(error: Exception) -> ChatMessage:
    return user(
        "Your previous reply could not be used: "
        f"{error}. Reply again with ONLY one valid JSON object in exactly the "
        "format requested earlier, with no surrounding prose."
    )


class LlmClient:
    """One session's handle on a backend. Counts every completed call,
    including structured-output repair rounds, and logs each one to the
    session transcript when a writer is attached."""

    def __init__(
        self,
        config: ModelConfig,
        backend: Backend,
        transcript: Optional[TranscriptWriter] = None,
    ):
        self.config = config
        self.backend = backend
        self.transcript = transcript
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> ChatResponse:
        if not messages:
            raise InvariantError("complete() requires at least one message")
        response = self.backend.complete(self.config, messages)
        self.calls += 1
        if self.transcript is not None:
            self.transcript.write(
                "completion",
                request_hash=hash_messages(messages),
                response={
                    "content": response.content,
                    "prompt_tokens": response.prompt_tokens,
                    "completion_tokens": response.completion_tokens,
                },
            )
        return response

    def complete_structured(self, messages: Sequence[ChatMessage], schema_id: str) -> Any:
        """Ask, parse, and (up to twice) repair until the reply validates."""
        try:
            parser = SCHEMAS[schema_id]
        except KeyError:
            raise ValueError(f"unregistered output schema: {schema_id}") from None
        convo = list(messages)
        raw = ""
        last_error: Optional[Exception] = None
        for _ in range(1 + MAX_REPAIR_ROUNDS):
            raw = self.complete(convo).content
            try:
                return parser(extract_json_object(raw))
            except (JsonExtractError, SchemaError) as exc:
                last_error = exc
                convo = convo + [assistant(raw or "(empty reply)"), _repair_message(exc)]
        raise StructuredOutputError(schema_id, raw, str(last_error))
