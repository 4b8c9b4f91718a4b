from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from selfexplain.errors import AuthError, MalformedResponseError, RetryExhaustedError
from selfexplain.gateway import (
    AlternatingMock,
    ChatRequest,
    MockRule,
    ProviderConfig,
    ScriptedMock,
    complete,
    load_mock_script,
    mock_complete,
)


class _StubHandler(BaseHTTPRequestHandler):
    """Serves a scripted sequence of (status, body) responses."""

    script: list[tuple[int, dict]] = []
    calls: list[dict] = []

    def log_message(self, *args) -> None:
        pass

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length") or 0)
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).calls.append({"path": self.path, "body": body,
                                 "auth": self.headers.get("Authorization")})
        index = min(len(type(self).calls) - 1, len(type(self).script) - 1)
        status, payload = type(self).script[index]
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture()
def stub_server():
    servers = []

    def start(script: list[tuple[int, dict]]):
        handler = type("Handler", (_StubHandler,), {"script": script, "calls": []})
        server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_address[1]}", handler

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()


def _completion(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


def _config(base_url: str, **kw) -> ProviderConfig:
    kw.setdefault("max_retries", 3)
    kw.setdefault("backoff_base", 0.001)
    return ProviderConfig(base_url=base_url, **kw)


REQUEST = ChatRequest(user_text="Say something.")


class TestComplete:
    def test_returns_first_choice_text(self, stub_server):
        url, handler = stub_server([(200, _completion("hello there"))])
        assert complete(REQUEST, _config(url)) == "hello there"
        assert handler.calls[0]["path"] == "/chat/completions"
        assert handler.calls[0]["body"]["messages"][-1]["content"] == "Say something."

    def test_instruct_style_body_supported(self, stub_server):
        url, _ = stub_server([(200, {"choices": [{"text": "plain text"}]})])
        assert complete(REQUEST, _config(url)) == "plain text"

    def test_retries_on_429_then_succeeds(self, stub_server):
        url, handler = stub_server([(429, {}), (429, {}), (200, _completion("ok"))])
        assert complete(REQUEST, _config(url)) == "ok"
        assert len(handler.calls) == 3

    def test_retries_on_500(self, stub_server):
        url, handler = stub_server([(500, {}), (200, _completion("ok"))])
        assert complete(REQUEST, _config(url)) == "ok"
        assert len(handler.calls) == 2

    def test_auth_failure_never_retried(self, stub_server):
        url, handler = stub_server([(401, {})])
        with pytest.raises(AuthError) as err:
            complete(REQUEST, _config(url))
        assert err.value.status == 401
        assert len(handler.calls) == 1

    def test_retry_budget_exhausted(self, stub_server):
        url, handler = stub_server([(503, {})])
        with pytest.raises(RetryExhaustedError):
            complete(REQUEST, _config(url, max_retries=2))
        assert len(handler.calls) == 3  # never more than max_retries + 1

    def test_malformed_body(self, stub_server):
        url, _ = stub_server([(200, {"unexpected": True})])
        with pytest.raises(MalformedResponseError):
            complete(REQUEST, _config(url))

    def test_backoff_delays_double(self, stub_server, monkeypatch):
        sleeps: list[float] = []
        monkeypatch.setattr("selfexplain.gateway.time.sleep", sleeps.append)
        url, _ = stub_server([(503, {})])
        with pytest.raises(RetryExhaustedError):
            complete(REQUEST, _config(url, max_retries=3, backoff_base=0.5))
        assert sleeps == [0.5, 1.0, 2.0]
        assert sleeps == sorted(sleeps)

    def test_bearer_token_from_env(self, stub_server, monkeypatch):
        monkeypatch.setenv("SELFEXPLAIN_API_KEY", "sk-test")
        url, handler = stub_server([(200, _completion("ok"))])
        complete(REQUEST, _config(url))
        assert handler.calls[0]["auth"] == "Bearer sk-test"

    def test_max_retries_bounded(self):
        with pytest.raises(ValueError):
            ProviderConfig(base_url="http://x", max_retries=6)


class TestChatRequest:
    def test_empty_user_text_rejected(self):
        with pytest.raises(ValueError):
            ChatRequest(user_text="")

    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            ChatRequest(user_text="x", temperature=-1)


class TestScriptedMock:
    def test_first_rule_wins(self):
        mock = ScriptedMock(rules=(MockRule("classif", "kmodel, k=2"),
                                   MockRule(".", "fallback rule")))
        request = ChatRequest(user_text="please run the classification now")
        assert mock_complete(request, mock) == "kmodel, k=2"

    def test_default_reply_when_nothing_matches(self):
        mock = ScriptedMock(rules=(MockRule("zebra", "striped"),),
                            default_reply="nothing matched")
        assert mock.complete(ChatRequest(user_text="plain prompt")) == "nothing matched"

    def test_deterministic(self):
        mock = ScriptedMock(rules=(MockRule("a", "reply-a"),))
        request = ChatRequest(user_text="prompt with a inside")
        assert mock.complete(request) == mock.complete(request)

    def test_seed_substitution(self):
        mock = ScriptedMock(default_reply="seeded {seed}", seed=42)
        assert mock.complete(ChatRequest(user_text="x")) == "seeded 42"

    def test_system_text_is_matchable(self):
        mock = ScriptedMock(rules=(MockRule("system marker", "matched"),))
        request = ChatRequest(user_text="plain", system_text="the system marker line")
        assert mock.complete(request) == "matched"

    def test_load_script_file(self, tmp_path):
        script = tmp_path / "rules.jsonl"
        script.write_text(
            '# comment\n'
            '{"pattern": "alpha", "reply": "first"}\n'
            '{"pattern": "beta", "reply": "second"}\n'
            '{"default_reply": "none of those"}\n', encoding="utf-8")
        mock = load_mock_script(script)
        assert mock.complete(ChatRequest(user_text="has beta inside")) == "second"
        assert mock.complete(ChatRequest(user_text="nothing")) == "none of those"

    def test_bad_script_record(self, tmp_path):
        script = tmp_path / "rules.jsonl"
        script.write_text('{"nonsense": 1}\n', encoding="utf-8")
        with pytest.raises(ValueError):
            load_mock_script(script)


class TestAlternatingMock:
    def test_cycles_replies_by_call(self):
        mock = AlternatingMock(["one", "two"])
        request = ChatRequest(user_text="same prompt")
        assert [mock.complete(request) for _ in range(4)] == ["one", "two", "one", "two"]

    def test_rules_bypass_the_cycle(self):
        mock = AlternatingMock(["one", "two"],
                               rules=[MockRule("classify", "kmodel, k=1")])
        classify = ChatRequest(user_text="please classify this")
        other = ChatRequest(user_text="other prompt")
        assert mock.complete(classify) == "kmodel, k=1"
        assert mock.complete(other) == "one"
        assert mock.complete(classify) == "kmodel, k=1"
        assert mock.complete(other) == "two"

    def test_needs_replies(self):
        with pytest.raises(ValueError):
            AlternatingMock([])
