"""Generation backends.

Three interchangeable implementations share one ``generate`` method:

* :class:`HttpBackend` talks to an OpenAI-compatible completions or
  chat-completions endpoint;
* :class:`CommandBackend` pipes the prompt through an external program;
* :class:`ScriptedBackend` replays canned responses for hermetic tests.
"""

from __future__ import annotations

import logging
import os
import re
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .prompting import FENCE, PromptText

log = logging.getLogger(__name__)

API_KEY_ENV = "CONVLOOP_API_KEY"
DEFAULT_REQUEST_TIMEOUT_S = 120.0


class BackendError(Exception):
    """Base class for generation failures."""


class NetworkError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class ScriptExhausted(BackendError):
    pass


class ChildProcessFailure(BackendError):
    pass


class ScriptParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class GenerationRequest:
    prompt: PromptText
    top_p: float = 0.95
    temperature: float = 1.0
    max_generation_tokens: int = 512
    stop_sequences: tuple = (FENCE,)
    chain_index: Optional[int] = None
    turn_index: Optional[int] = None


@dataclass(frozen=True)
class GenerationResponse:
    raw_text: str
    backend_name: str
    latency_ms: int


class GenerationBackend(Protocol):
    name: str

    def generate(self, req: GenerationRequest) -> GenerationResponse: ...


def _elapsed_ms(start: float) -> int:
    return int((time.monotonic() - start) * 1000)


# -- scripted ------------------------------------------------------------------


@dataclass
class ScriptedBackend:
    """Replays responses in order, or by ``(chain_index, turn_index)`` key.

    Keyed responses take precedence; unkeyed ones are consumed in file order.
    Every prompt received is recorded in ``prompts``.
    """

    responses: Sequence[str] = ()
    keyed: dict = field(default_factory=dict)
    name: str = "script"

    def __post_init__(self) -> None:
        self._queue = list(self.responses)
        self._keyed = dict(self.keyed)
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    @property
    def calls(self) -> int:
        return len(self.prompts)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        start = time.monotonic()
        with self._lock:
            key = (req.chain_index, req.turn_index)
            if key in self._keyed:
                text = self._keyed.pop(key)
            elif self._queue:
                text = self._queue.pop(0)
            else:
                raise ScriptExhausted(f"no scripted response left for chain {key[0]} turn {key[1]}")
            self.prompts.append(req.prompt.text)
        return GenerationResponse(text, self.name, _elapsed_ms(start))


_KEY_LINE = re.compile(r"@chain:(\d+) turn:(\d+)\s*")


def parse_script(text: str, path="<script>") -> ScriptedBackend:
    responses: list[str] = []
    keyed: dict = {}
    blocks: list[tuple[int, list[str]]] = []
    current: list[str] = []
    start_line = 1
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if line.rstrip("\r") == "---":
            blocks.append((start_line, current))
            current, start_line = [], lineno + 1
        else:
            current.append(line)
    if current or blocks:
        blocks.append((start_line, current))
    if blocks and not blocks[-1][1]:
        blocks.pop()  # trailing separator

    for first_line, block in blocks:
        if block and block[0].startswith("@"):
            m = _KEY_LINE.fullmatch(block[0])
            if not m:
                raise ScriptParseError(path, first_line, f"malformed key line {block[0]!r}")
            key = (int(m.group(1)), int(m.group(2)))
            if key[1] < 1:
                raise ScriptParseError(path, first_line, "turn numbers start at 1")
            if key in keyed:
                raise ScriptParseError(path, first_line, f"duplicate key chain:{key[0]} turn:{key[1]}")
            keyed[key] = "\n".join(block[1:])
        else:
            responses.append("\n".join(block))
    return ScriptedBackend(responses, keyed)


def load_script(path) -> ScriptedBackend:
    path = Path(path)
    return parse_script(path.read_text(encoding="utf-8"), path)


# -- external command --------------------------------------------------------------


@dataclass
class CommandBackend:
    """Runs ``argv`` once per sample: prompt on stdin, completion on stdout.

    Sampling parameters are passed through ``CONVLOOP_*`` environment
    variables so wrappers around local model runners can honour them.
    """

    argv: Sequence[str]
    timeout_s: float = DEFAULT_REQUEST_TIMEOUT_S
    name: str = "cmd"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        env = dict(os.environ)
        env.update(
            CONVLOOP_TOP_P=str(req.top_p),
            CONVLOOP_TEMPERATURE=str(req.temperature),
            CONVLOOP_MAX_TOKENS=str(req.max_generation_tokens),
            CONVLOOP_STOP="\n".join(req.stop_sequences),
        )
        start = time.monotonic()
        try:
            proc = subprocess.run(
                list(self.argv),
                input=req.prompt.text.encode("utf-8"),
                capture_output=True,
                timeout=self.timeout_s,
                env=env,
            )
        except FileNotFoundError as exc:
            raise ChildProcessFailure(f"command not found: {self.argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ChildProcessFailure(f"command timed out after {self.timeout_s}s") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace").strip()[-500:]
            raise ChildProcessFailure(f"command exited with status {proc.returncode}: {tail}")
        return GenerationResponse(proc.stdout.decode("utf-8", "replace"), self.name, _elapsed_ms(start))


# -- OpenAI-compatible HTTP -----------------------------------------------------------


@dataclass
class HttpBackend:
    """Client for OpenAI-compatible ``/completions`` and ``/chat/completions``.

    ``api`` is inferred from the endpoint path when not given.  Transport
    errors and 5xx responses are retried with exponential backoff (1 s, 2 s,
    4 s, ...); 429 responses honour ``Retry-After`` when present.
    """

    endpoint: str
    model: str
    api: Optional[str] = None
    api_key: Optional[str] = None
    timeout_s: float = DEFAULT_REQUEST_TIMEOUT_S
    max_retries: int = 3
    sleep: Callable[[float], None] = time.sleep
    transport: Optional[httpx.BaseTransport] = None
    name: str = "http"

    def __post_init__(self) -> None:
        if self.api is None:
            self.api = "chat" if self.endpoint.rstrip("/").endswith("chat/completions") else "completion"
        if self.api not in ("chat", "completion"):
            raise ValueError(f"unknown api dialect {self.api!r}")
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)
        self._client = httpx.Client(timeout=self.timeout_s, transport=self.transport)

    def payload(self, req: GenerationRequest) -> dict:
        body = {
            "model": self.model,
            "top_p": req.top_p,
            "temperature": req.temperature,
            "max_tokens": req.max_generation_tokens,
            "n": 1,
        }
        if self.api == "chat":
            body["messages"] = [{"role": "user", "content": req.prompt.text}]
            # chat models open their answer with a fence; stopping there would truncate it
            stops = [s for s in req.stop_sequences if s != FENCE]
        else:
            body["prompt"] = req.prompt.text
            stops = list(req.stop_sequences)
        if stops:
            body["stop"] = stops
        return body

    def _extract_text(self, data: dict) -> str:
        try:
            choice = data["choices"][0]
            if self.api == "chat":
                return choice["message"]["content"] or ""
            return choice["text"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {str(data)[:200]}") from exc

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = self.payload(req)
        start = time.monotonic()
        backoff = 1.0
        for attempt in range(self.max_retries + 1):
            last = attempt == self.max_retries
            try:
                resp = self._client.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                if last:
                    raise NetworkError(f"{self.endpoint}: {exc}") from exc
                log.warning("request failed (%s); retrying in %.0fs", exc, backoff)
                self.sleep(backoff)
                backoff *= 2
                continue
            if resp.status_code == 429:
                if last:
                    raise RateLimited(f"{self.endpoint}: rate limited")
                delay = _retry_after(resp) or backoff
                log.warning("rate limited; retrying in %.1fs", delay)
                self.sleep(delay)
                backoff *= 2
                continue
            if resp.status_code >= 500:
                if last:
                    raise NetworkError(f"{self.endpoint}: HTTP {resp.status_code}")
                log.warning("HTTP %d; retrying in %.0fs", resp.status_code, backoff)
                self.sleep(backoff)
                backoff *= 2
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{self.endpoint}: HTTP {resp.status_code}: {resp.text[:300]}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise BackendError(f"{self.endpoint}: response is not JSON") from exc
            return GenerationResponse(self._extract_text(data), self.name, _elapsed_ms(start))
        raise AssertionError("unreachable")

    def close(self) -> None:
        self._client.close()


def _retry_after(resp: httpx.Response) -> Optional[float]:
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None
