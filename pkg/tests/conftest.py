from __future__ import annotations

import sys
import threading
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from selfexplain.gateway import ChatRequest, load_mock_script
from selfexplain.parsing import parse_model_file
from selfexplain.service import packaged_mock_script_path, packaged_model_path

FIXTURE_NAMES = ["sami-mini.tmk.json", "minimal.tmk.json", "two-path.tmk.json",
                 "looped.tmk.json", "branchy.tmk.json"]


@pytest.fixture(scope="session")
def fixture_paths() -> list[Path]:
    return [packaged_model_path(name) for name in FIXTURE_NAMES]


@pytest.fixture(scope="session")
def sami_mini():
    return parse_model_file(packaged_model_path())


@pytest.fixture(scope="session")
def two_path():
    return parse_model_file(packaged_model_path("two-path.tmk.json"))


@pytest.fixture(scope="session")
def looped():
    return parse_model_file(packaged_model_path("looped.tmk.json"))


@pytest.fixture()
def scripted_mock():
    return load_mock_script(packaged_mock_script_path())


class RecordingProvider:
    """Wraps a provider and keeps every request for prompt inspection."""

    def __init__(self, inner):
        self.inner = inner
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.requests.append(request)
        return self.inner.complete(request)

    @property
    def last_user_text(self) -> str:
        return self.requests[-1].user_text


class SequenceProvider:
    """Replays a fixed list of replies in call order."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        reply = self.replies[min(self.calls, len(self.replies) - 1)]
        self.calls += 1
        return reply


class EchoProvider:
    """Returns the prompt itself, so tests can inspect what was sent."""

    def complete(self, request: ChatRequest) -> str:
        return request.user_text


class FailingProvider:
    def __init__(self, exc: Exception):
        self.exc = exc
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        raise self.exc


@pytest.fixture()
def recording():
    return RecordingProvider


@pytest.fixture()
def echo_provider():
    return EchoProvider()
