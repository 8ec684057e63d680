from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from helpers import GARBAGE_REPLIES, analysis_reply
from fixcrew.llm import (
    BackendError,
    BackendKind,
    HttpChatBackend,
    LlmClient,
    ModelConfig,
    ReplayBackend,
    ReplayMismatch,
    ScriptedBackend,
    ScriptExhausted,
    StructuredOutputError,
    TransportError,
    hash_messages,
    replay_backend,
    user,
)
from fixcrew.transcript import TranscriptWriter, read_events
from fixcrew.types import BugCategory, InvariantError


SCRIPTED = ModelConfig(backend_kind=BackendKind.SCRIPTED)


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append({"headers": dict(self.headers), "body": body})
        status, payload = self.server.script.pop(0)
        data = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.script = []
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


def _http_config(server, **overrides) -> ModelConfig:
    kwargs = dict(
        backend_kind=BackendKind.HTTP_CHAT,
        endpoint_url=f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions",
        model_name="test-model",
        request_timeout_ms=5000,
        max_retries=2,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def _completion_body(content: str, prompt_tokens: int = 7, completion_tokens: int = 3) -> str:
    return json.dumps(
        {
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
        }
    )


def test_scripted_backend_passthrough():
    client = LlmClient(SCRIPTED, ScriptedBackend(["hello"]))
    assert client.complete([user("anything")]).content == "hello"
    assert client.calls == 1


def test_scripted_backend_exhaustion():
    client = LlmClient(SCRIPTED, ScriptedBackend([]))
    with pytest.raises(ScriptExhausted):
        client.complete([user("anything")])
    assert client.calls == 0


def test_scripted_backend_is_deterministic_per_call_index():
    script = ["one", "two", "three"]
    first = [ScriptedBackend(script).complete(SCRIPTED, [user("x")]).content for _ in range(1)]
    backend_a, backend_b = ScriptedBackend(script), ScriptedBackend(script)
    seq_a = [backend_a.complete(SCRIPTED, [user(str(i))]).content for i in range(3)]
    seq_b = [backend_b.complete(SCRIPTED, [user(str(i))]).content for i in range(3)]
    assert seq_a == seq_b == script
    assert first == ["one"]


def test_message_content_must_be_nonempty():
    with pytest.raises(InvariantError):
        user("")


def test_http_backend_returns_stub_body(stub_server, monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "sk-test")
    stub_server.script.append((200, _completion_body("stub says hi")))
    backend = HttpChatBackend(sleep=lambda _: None)
    response = backend.complete(_http_config(stub_server), [user("ping")])
    assert response.content == "stub says hi"
    assert response.prompt_tokens == 7
    assert response.completion_tokens == 3
    request = stub_server.requests[0]
    assert request["headers"].get("Authorization") == "Bearer sk-test"
    assert request["body"]["model"] == "test-model"
    assert request["body"]["messages"] == [{"role": "user", "content": "ping"}]
    assert "temperature" in request["body"] and "max_tokens" in request["body"]


def test_http_backend_retries_transient_5xx(stub_server, monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    stub_server.script.append((500, "busy"))
    stub_server.script.append((200, _completion_body("second try")))
    backend = HttpChatBackend(sleep=lambda _: None)
    assert backend.complete(_http_config(stub_server), [user("ping")]).content == "second try"
    assert len(stub_server.requests) == 2


def test_http_backend_4xx_is_not_retried(stub_server):
    stub_server.script.append((404, "nope"))
    backend = HttpChatBackend(sleep=lambda _: None)
    with pytest.raises(BackendError) as excinfo:
        backend.complete(_http_config(stub_server), [user("ping")])
    assert excinfo.value.status == 404
    assert len(stub_server.requests) == 1


def test_http_backend_gives_up_after_retries(stub_server):
    stub_server.script.extend([(500, "a"), (503, "b"), (500, "c")])
    backend = HttpChatBackend(sleep=lambda _: None)
    with pytest.raises(BackendError):
        backend.complete(_http_config(stub_server, max_retries=2), [user("ping")])
    assert len(stub_server.requests) == 3


def test_http_backend_network_error_becomes_transport_error():
    config = ModelConfig(
        backend_kind=BackendKind.HTTP_CHAT,
        endpoint_url="http://127.0.0.1:1/unroutable",
        max_retries=1,
        request_timeout_ms=200,
    )
    backend = HttpChatBackend(sleep=lambda _: None)
    with pytest.raises(TransportError):
        backend.complete(config, [user("ping")])


def test_model_config_invariants():
    with pytest.raises(InvariantError):
        ModelConfig(temperature=2.5)
    with pytest.raises(InvariantError):
        ModelConfig(max_tokens=0)
    with pytest.raises(InvariantError):
        ModelConfig(backend_kind=BackendKind.HTTP_CHAT, endpoint_url="")
    assert ModelConfig().temperature == 0.2


class TestCompleteStructured:
    def test_fenced_reply_parses(self):
        client = LlmClient(SCRIPTED, ScriptedBackend([f"```json\n{analysis_reply()}\n```"]))
        analysis = client.complete_structured([user("analyze")], "analysis_v1")
        assert analysis.detected_categories == (BugCategory.SYNTAX,)
        assert client.calls == 1

    def test_one_repair_round_then_success(self):
        client = LlmClient(SCRIPTED, ScriptedBackend(["{}", analysis_reply()]))
        analysis = client.complete_structured([user("analyze")], "analysis_v1")
        assert analysis.summary == "diagnosed the defect"
        assert client.calls == 2  # repair rounds are real calls

    def test_three_garbage_replies_exhaust_repairs(self):
        client = LlmClient(SCRIPTED, ScriptedBackend(GARBAGE_REPLIES[:3]))
        with pytest.raises(StructuredOutputError) as excinfo:
            client.complete_structured([user("analyze")], "analysis_v1")
        assert client.calls == 3
        assert excinfo.value.raw_text  # raw text preserved for the transcript

    def test_repair_message_explains_the_error(self):
        captured = []

        class Spy(ScriptedBackend):
            def complete(self, config, messages):
                captured.append([m.to_dict() for m in messages])
                return super().complete(config, messages)

        client = LlmClient(SCRIPTED, Spy(["{}", analysis_reply()]))
        client.complete_structured([user("analyze")], "analysis_v1")
        repair_convo = captured[1]
        assert repair_convo[-2]["role"] == "assistant"  # the bad reply is quoted
        assert "summary" in repair_convo[-1]["content"]

    def test_unregistered_schema_is_a_usage_error(self):
        client = LlmClient(SCRIPTED, ScriptedBackend(["{}"]))
        with pytest.raises(ValueError):
            client.complete_structured([user("x")], "bogus_schema")


class TestRecordReplay:
    def test_replay_reproduces_the_recorded_sequence(self, tmp_path):
        path = tmp_path / "session.jsonl"
        with TranscriptWriter(path) as writer:
            client = LlmClient(SCRIPTED, ScriptedBackend(["alpha", "beta"]), writer)
            client.complete([user("first")])
            client.complete([user("second")])

        replayed = LlmClient(SCRIPTED, replay_backend(str(path)))
        assert replayed.complete([user("first")]).content == "alpha"
        assert replayed.complete([user("second")]).content == "beta"

    def test_divergent_request_raises_mismatch(self, tmp_path):
        path = tmp_path / "session.jsonl"
        with TranscriptWriter(path) as writer:
            client = LlmClient(SCRIPTED, ScriptedBackend(["alpha"]), writer)
            client.complete([user("original prompt")])
        replayed = LlmClient(SCRIPTED, replay_backend(str(path)))
        with pytest.raises(ReplayMismatch):
            replayed.complete([user("altered prompt")])

    def test_empty_recording_always_mismatches(self):
        backend = ReplayBackend([])
        with pytest.raises(ReplayMismatch):
            backend.complete(SCRIPTED, [user("anything")])

    def test_completion_events_count_equals_llm_calls(self, tmp_path):
        path = tmp_path / "session.jsonl"
        with TranscriptWriter(path) as writer:
            client = LlmClient(SCRIPTED, ScriptedBackend(["{}", "{}", "{}"]), writer)
            with pytest.raises(StructuredOutputError):
                client.complete_structured([user("analyze")], "analysis_v1")
        events = read_events(path, kind="completion")
        assert len(events) == client.calls == 3
        assert all(e["request_hash"] for e in events)

    def test_request_hash_is_stable(self):
        messages = [user("same")]
        assert hash_messages(messages) == hash_messages([user("same")])
        assert hash_messages(messages) != hash_messages([user("different")])
