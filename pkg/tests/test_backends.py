import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from convloop.backends import (
    API_KEY_ENV,
    BackendError,
    ChildProcessFailure,
    CommandBackend,
    GenerationRequest,
    HttpBackend,
    NetworkError,
    RateLimited,
    ScriptedBackend,
    ScriptExhausted,
    ScriptParseError,
    load_script,
    parse_script,
)
from convloop.prompting import PromptText


def _req(text="prompt", chain=0, turn=1):
    return GenerationRequest(PromptText.of(text), chain_index=chain, turn_index=turn)


# scripted -------------------------------------------------------------------------


def test_scripted_queue_then_exhausted():
    backend = ScriptedBackend(["S1", "S2", "S3"])
    assert [backend.generate(_req()).raw_text for _ in range(3)] == ["S1", "S2", "S3"]
    with pytest.raises(ScriptExhausted):
        backend.generate(_req())
    assert backend.calls == 3


def test_sieve_script(sieve_script):
    backend = load_script(sieve_script)
    s1, s2, s3 = (backend.generate(_req()).raw_text for _ in range(3))
    assert "if not any(n % p > 0 for p in primes):" in s1
    assert "for n in range(2, max):" in s2 and "all(" in s2
    assert "all(n % p > 0" in s3 and "range(2, max + 1)" in s3
    with pytest.raises(ScriptExhausted):
        backend.generate(_req())


def test_empty_script_errors_on_first_call(tmp_path):
    path = tmp_path / "empty.script"
    path.write_text("")
    with pytest.raises(ScriptExhausted):
        load_script(path).generate(_req())


def test_script_separators_and_trailing_separator():
    backend = parse_script("A\nA2\n---\nB\n---\n")
    assert backend.generate(_req()).raw_text == "A\nA2"
    assert backend.generate(_req()).raw_text == "B"
    with pytest.raises(ScriptExhausted):
        backend.generate(_req())


def test_script_separator_must_be_exact():
    backend = parse_script("A\n ---\n----\nB")
    assert backend.generate(_req()).raw_text == "A\n ---\n----\nB"


def test_keyed_script():
    text = "@chain:1 turn:1\nKEYED\n---\nFIRST\n---\nSECOND"
    backend = parse_script(text)
    assert backend.generate(_req(chain=0, turn=1)).raw_text == "FIRST"
    assert backend.generate(_req(chain=1, turn=1)).raw_text == "KEYED"
    assert backend.generate(_req(chain=1, turn=2)).raw_text == "SECOND"


def test_duplicate_keys_rejected_with_line_number():
    text = "@chain:0 turn:1\nA\n---\n@chain:0 turn:1\nB\n"
    with pytest.raises(ScriptParseError) as info:
        parse_script(text, "dup.script")
    assert info.value.line == 4
    assert "dup.script:4" in str(info.value)


@pytest.mark.parametrize("bad", ["@chain:x turn:1\nA", "@chain:0 turn:0\nA", "@turn:1\nA"])
def test_malformed_key_lines(bad):
    with pytest.raises(ScriptParseError):
        parse_script(bad)


# command ----------------------------------------------------------------------------


def test_command_backend_pipes_prompt():
    code = "import os,sys; sys.stdout.write(sys.stdin.read().upper() + os.environ['CONVLOOP_TOP_P'])"
    backend = CommandBackend([sys.executable, "-c", code])
    resp = backend.generate(_req("fix me"))
    assert resp.raw_text == "FIX ME0.95"
    assert resp.backend_name == "cmd"


def test_command_backend_nonzero_exit():
    with pytest.raises(ChildProcessFailure, match="status 3"):
        CommandBackend([sys.executable, "-c", "import sys; sys.exit(3)"]).generate(_req())


def test_command_backend_missing_binary():
    with pytest.raises(ChildProcessFailure):
        CommandBackend(["/nonexistent/generator"]).generate(_req())


def test_command_backend_timeout():
    backend = CommandBackend([sys.executable, "-c", "import time; time.sleep(10)"], timeout_s=0.3)
    with pytest.raises(ChildProcessFailure, match="timed out"):
        backend.generate(_req())


# HTTP ---------------------------------------------------------------------------------


class StubServer:
    """Replies from a queue of (status, headers, body) and records requests."""

    def __init__(self):
        self.replies = []
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                stub.requests.append(
                    {"path": self.path, "headers": dict(self.headers), "body": json.loads(self.rfile.read(length))}
                )
                status, headers, body = stub.replies.pop(0) if stub.replies else (500, {}, {})
                payload = json.dumps(body).encode()
                self.send_response(status)
                for k, v in headers.items():
                    self.send_header(k, v)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def url(self, path):
        return f"http://127.0.0.1:{self.server.server_address[1]}{path}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    server = StubServer()
    yield server
    server.close()


def test_http_completion(stub, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sk-test")
    stub.replies.append((200, {}, {"choices": [{"text": "def f():\n    return 1\n"}]}))
    backend = HttpBackend(stub.url("/v1/completions"), "code-model")
    resp = backend.generate(_req("The following code is buggy."))
    assert resp.raw_text == "def f():\n    return 1\n"
    sent = stub.requests[0]
    assert sent["path"] == "/v1/completions"
    assert sent["headers"]["Authorization"] == "Bearer sk-test"
    assert sent["body"] == {
        "model": "code-model",
        "prompt": "The following code is buggy.",
        "top_p": 0.95,
        "temperature": 1.0,
        "max_tokens": 512,
        "n": 1,
        "stop": ["```"],
    }


def test_http_chat(stub):
    stub.replies.append((200, {}, {"choices": [{"message": {"role": "assistant", "content": "canned"}}]}))
    backend = HttpBackend(stub.url("/v1/chat/completions"), "chat-model", api_key="k")
    assert backend.api == "chat"
    assert backend.generate(_req("hello")).raw_text == "canned"
    body = stub.requests[0]["body"]
    assert body["messages"] == [{"role": "user", "content": "hello"}]
    assert "stop" not in body and "prompt" not in body


def test_http_retries_server_errors_with_backoff(stub):
    stub.replies += [(503, {}, {}), (502, {}, {}), (200, {}, {"choices": [{"text": "ok"}]})]
    delays = []
    backend = HttpBackend(stub.url("/v1/completions"), "m", sleep=delays.append)
    assert backend.generate(_req()).raw_text == "ok"
    assert delays == [1.0, 2.0]


def test_http_gives_up_after_retries(stub):
    stub.replies += [(500, {}, {})] * 4
    delays = []
    backend = HttpBackend(stub.url("/v1/completions"), "m", sleep=delays.append)
    with pytest.raises(NetworkError):
        backend.generate(_req())
    assert delays == [1.0, 2.0, 4.0]
    assert len(stub.requests) == 4


def test_http_rate_limit_honours_retry_after(stub):
    stub.replies += [(429, {"Retry-After": "7"}, {}), (200, {}, {"choices": [{"text": "ok"}]})]
    delays = []
    backend = HttpBackend(stub.url("/v1/completions"), "m", sleep=delays.append)
    assert backend.generate(_req()).raw_text == "ok"
    assert delays == [7.0]


def test_http_rate_limit_exhausted(stub):
    stub.replies += [(429, {}, {})] * 2
    backend = HttpBackend(stub.url("/v1/completions"), "m", max_retries=1, sleep=lambda s: None)
    with pytest.raises(RateLimited):
        backend.generate(_req())


def test_http_client_error_not_retried(stub):
    stub.replies.append((401, {}, {"error": "bad key"}))
    backend = HttpBackend(stub.url("/v1/completions"), "m", sleep=lambda s: pytest.fail("retried"))
    with pytest.raises(BackendError, match="401"):
        backend.generate(_req())


def test_http_bad_shape(stub):
    stub.replies.append((200, {}, {"unexpected": True}))
    with pytest.raises(BackendError, match="shape"):
        HttpBackend(stub.url("/v1/completions"), "m").generate(_req())


def test_http_connection_refused_is_network_error():
    delays = []
    backend = HttpBackend("http://127.0.0.1:9/v1/completions", "m", sleep=delays.append, timeout_s=2)
    with pytest.raises(NetworkError):
        backend.generate(_req())
    assert delays == [1.0, 2.0, 4.0]
