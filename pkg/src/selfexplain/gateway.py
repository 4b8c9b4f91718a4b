"""Chat-completion providers: a real HTTP client and deterministic mocks.

Every provider exposes one method, ``complete(request) -> str``. The HTTP
client talks to any OpenAI-compatible endpoint; the mocks make the whole
system testable offline.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import requests

from .errors import AuthError, MalformedResponseError, ProviderError, RetryExhaustedError

DEFAULT_API_KEY_ENV = "SELFEXPLAIN_API_KEY"


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 512
    model_name: str = "default"

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @property
    def prompt_text(self) -> str:
        """System and user text joined, the surface mock rules match against."""
        if self.system_text:
            return self.system_text + "\n" + self.user_text
        return self.user_text


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if not 0 <= self.max_retries <= 5:
            raise ValueError("max_retries must be between 0 and 5")


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> str:
        ...


def complete(request: ChatRequest, config: ProviderConfig) -> str:
    """Send one chat completion, retrying transient failures with backoff.

    Timeouts, connection errors, 429 and 5xx responses are retried up to
    ``config.max_retries`` times with doubling delays. 401/403 raise
    ``AuthError`` immediately; a 200 without usable text raises
    ``MalformedResponseError``.
    """
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    messages = []
    if request.system_text:
        messages.append({"role": "system", "content": request.system_text})
    messages.append({"role": "user", "content": request.user_text})
    body = {
        "model": request.model_name,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }

    delay = config.backoff_base
    last_failure = "no attempt made"
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(delay)
            delay *= 2
        try:
            response = requests.post(url, json=body, headers=headers, timeout=config.timeout)
        except requests.RequestException as exc:
            last_failure = f"transport error: {exc}"
            continue
        status = response.status_code
        if status in (401, 403):
            raise AuthError(f"authentication rejected by {url}", status=status)
        if status == 429 or status >= 500:
            last_failure = f"HTTP {status}"
            continue
        if status != 200:
            raise ProviderError(f"unexpected HTTP {status} from {url}", status=status)
        return _extract_text(response, url)
    raise RetryExhaustedError(
        f"gave up on {url} after {config.max_retries + 1} attempts ({last_failure})")


def _extract_text(response: requests.Response, url: str) -> str:
    try:
        payload = response.json()
        choice = payload["choices"][0]
        text = choice["message"]["content"] if "message" in choice else choice["text"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(
            f"cannot read completion text from {url}: {exc}", status=200) from exc
    if not isinstance(text, str):
        raise MalformedResponseError(f"completion text from {url} is not a string", status=200)
    return text


class HttpProvider:
    """Provider bound to one endpoint configuration."""

    def __init__(self, config: ProviderConfig, model_name: str = "default"):
        self.config = config
        self.model_name = model_name

    def complete(self, request: ChatRequest) -> str:
        if request.model_name == "default" and self.model_name != "default":
            request = ChatRequest(user_text=request.user_text,
                                  system_text=request.system_text,
                                  temperature=request.temperature,
                                  max_output_tokens=request.max_output_tokens,
                                  model_name=self.model_name)
        return complete(request, self.config)


@dataclass(frozen=True)
class MockRule:
    pattern: str  # regular expression searched against the prompt text
    reply: str


@dataclass(frozen=True)
class ScriptedMock:
    """First-matching-rule mock; a pure function of (prompt, rules, seed).

    Replies may embed ``{seed}``, which is substituted on the way out.
    """

    rules: tuple[MockRule, ...] = ()
    default_reply: str = "I considered the material I was given and summarized it."
    seed: int = 0

    def complete(self, request: ChatRequest) -> str:
        prompt = request.prompt_text
        for rule in self.rules:
            if re.search(rule.pattern, prompt, re.DOTALL):
                return rule.reply.replace("{seed}", str(self.seed))
        return self.default_reply.replace("{seed}", str(self.seed))


def mock_complete(request: ChatRequest, mock: ScriptedMock) -> str:
    return mock.complete(request)


def load_mock_script(path: str | Path, seed: int = 0) -> ScriptedMock:
    """Load a mock script: one JSON record per line.

    Records with ``pattern`` and ``reply`` become rules in file order; a
    record with only ``default_reply`` replaces the fallback.
    """
    rules: list[MockRule] = []
    default_reply = ScriptedMock.default_reply
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        record = json.loads(line)
        if "pattern" in record:
            rules.append(MockRule(pattern=record["pattern"], reply=record["reply"]))
        elif "default_reply" in record:
            default_reply = record["default_reply"]
        else:
            raise ValueError(f"{path}:{line_no}: record needs 'pattern' or 'default_reply'")
    return ScriptedMock(rules=tuple(rules), default_reply=default_reply, seed=seed)


class AlternatingMock:
    """Stateful test provider cycling through replies call by call.

    Rules are checked first (so classifier prompts can get a fixed
    verdict); unmatched calls walk the reply cycle. Intended for
    exercising the repeated-question studies with controlled variation.
    """

    def __init__(self, replies: Sequence[str], rules: Iterable[MockRule] = ()):
        if not replies:
            raise ValueError("need at least one reply")
        self._replies = list(replies)
        self._rules = tuple(rules)
        self._calls = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        prompt = request.prompt_text
        for rule in self._rules:
            if re.search(rule.pattern, prompt, re.DOTALL):
                return rule.reply
        with self._lock:
            reply = self._replies[self._calls % len(self._replies)]
            self._calls += 1
        return reply
