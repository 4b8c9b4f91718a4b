"""HTTP question-answering service with feedback capture and a webhook.

Endpoints: POST /ask, POST /feedback, POST /webhook, GET /health,
GET /model/summary. Records are appended to a line-delimited UTF-8 file,
so a restarted service picks up exactly where it left off.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

from .errors import ConfigError, PipelineError
from .gateway import (
    DEFAULT_API_KEY_ENV,
    HttpProvider,
    Provider,
    ProviderConfig,
    load_mock_script,
)
from .model import validate
from .parsing import parse_model_file
from .pipeline import DEFAULT_K, DEFAULT_K_MAX, ExplainPipeline, TemplateSet

DEFAULT_TRIGGER_TAG = "#SAMIexplain"


@dataclass
class ServiceConfig:
    model_path: Path
    provider: str = "mock"  # "mock" or "live"
    mock_script: Path | None = None
    base_url: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    chat_model: str = "default"
    port: int = 8080
    trigger_tag: str = DEFAULT_TRIGGER_TAG
    k_max: int = DEFAULT_K_MAX
    default_k: int = DEFAULT_K
    level: int = 0
    templates_dir: Path | None = None
    record_path: Path = field(default_factory=lambda: Path("ask_records.jsonl"))
    static_dir: Path | None = None


def load_service_config(path: str | Path) -> ServiceConfig:
    """Read a JSON config file whose keys mirror ``ServiceConfig``."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "model_path" not in raw:
        raise ConfigError("config must be a JSON object with at least 'model_path'")
    known = set(ServiceConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("model_path", "mock_script", "templates_dir", "record_path", "static_dir"):
        if raw.get(key) is not None and key in raw:
            raw[key] = Path(raw[key])
    return ServiceConfig(**raw)


def packaged_model_path(name: str = "sami-mini.tmk.json") -> Path:
    return Path(str(resources.files("selfexplain").joinpath("data", name)))


def packaged_mock_script_path() -> Path:
    return Path(str(resources.files("selfexplain").joinpath("data", "mock_rules.jsonl")))


def build_provider(config: ServiceConfig) -> Provider:
    if config.provider == "mock":
        script = config.mock_script or packaged_mock_script_path()
        return load_mock_script(script)
    if config.provider == "live":
        if not config.base_url:
            raise ConfigError("live provider needs 'base_url'")
        return HttpProvider(ProviderConfig(base_url=config.base_url,
                                           api_key_env=config.api_key_env),
                            model_name=config.chat_model)
    raise ConfigError(f"unknown provider '{config.provider}' (expected 'mock' or 'live')")


class DuplicateFeedbackError(Exception):
    pass


class RecordStore:
    """Append-only JSONL store for ask records and their feedback.

    Writes are serialized by a lock; reloading the file reconstructs the
    full state, so nothing is lost across restarts.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._asks: dict[str, dict] = {}
        self._feedback: dict[str, dict] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                if record.get("kind") == "ask":
                    self._asks[record["trace_id"]] = record
                elif record.get("kind") == "feedback":
                    self._feedback[record["trace_id"]] = record

    def _append(self, record: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")

    def add_ask(self, record: dict) -> None:
        with self._lock:
            record = {"kind": "ask", "timestamp": time.time(), **record}
            self._asks[record["trace_id"]] = record
            self._append(record)

    def get_ask(self, trace_id: str) -> dict | None:
        return self._asks.get(trace_id)

    def get_feedback(self, trace_id: str) -> dict | None:
        return self._feedback.get(trace_id)

    def add_feedback(self, trace_id: str, clear: str, improved: str, comment: str) -> None:
        with self._lock:
            if trace_id not in self._asks:
                raise KeyError(trace_id)
            if trace_id in self._feedback:
                raise DuplicateFeedbackError(trace_id)
            record = {"kind": "feedback", "trace_id": trace_id, "clear": clear,
                      "improved": improved, "comment": comment, "timestamp": time.time()}
            self._feedback[trace_id] = record
            self._append(record)

    def __len__(self) -> int:
        return len(self._asks)


def _as_yes_no(value: object) -> str | None:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, str) and value.lower() in ("yes", "no"):
        return value.lower()
    return None


class ExplainService:
    """The service core, independent of HTTP plumbing for easy testing."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        try:
            self.model = parse_model_file(config.model_path)
        except FileNotFoundError as exc:
            raise ConfigError(f"model file not found: {config.model_path}") from exc
        violations = validate(self.model)
        if violations:
            summary = "; ".join(str(v) for v in violations[:5])
            raise ConfigError(f"model failed validation: {summary}")
        templates = TemplateSet.load(config.templates_dir)
        self.templates = templates
        self.provider = build_provider(config)
        self.pipeline = ExplainPipeline(self.model, self.provider, level=config.level,
                                        templates=templates, default_k=config.default_k,
                                        k_max=config.k_max)
        self.store = RecordStore(config.record_path)

    # ---- endpoint logic -------------------------------------------------

    def ask(self, question: object) -> tuple[int, dict]:
        if not isinstance(question, str) or not question.strip():
            return 400, {"error": "question must be non-empty text"}
        question = question.strip()
        try:
            result = self.pipeline.explain(question)
        except PipelineError as exc:
            self.store.add_ask({"trace_id": exc.trace_id, "question": question,
                                "answer": None, "class": None, "k": None,
                                "snippets": [], "error": str(exc)})
            return 502, {"trace_id": exc.trace_id, "error": str(exc)}
        record = {
            "trace_id": result.trace_id,
            "question": question,
            "answer": result.answer,
            "class": result.verdict.question_class.value,
            "k": result.verdict.k,
            "snippets": [s.snippet.source_id for s in result.used_snippets],
        }
        self.store.add_ask(record)
        return 200, {"trace_id": result.trace_id, "answer": result.answer,
                     "class": record["class"], "k": record["k"],
                     "snippets": record["snippets"]}

    def feedback(self, payload: dict) -> tuple[int, dict]:
        trace_id = payload.get("trace_id")
        clear = _as_yes_no(payload.get("clear"))
        improved = _as_yes_no(payload.get("improved"))
        comment = payload.get("comment", "")
        if not isinstance(trace_id, str) or clear is None or improved is None:
            return 400, {"error": "feedback needs trace_id, clear (yes/no), improved (yes/no)"}
        try:
            self.store.add_feedback(trace_id, clear, improved, str(comment))
        except KeyError:
            return 404, {"error": f"unknown trace_id '{trace_id}'"}
        except DuplicateFeedbackError:
            return 409, {"error": f"feedback already recorded for '{trace_id}'"}
        return 200, {"accepted": True}

    def webhook(self, payload: dict) -> tuple[int, dict]:
        message = payload.get("message_text")
        if not isinstance(message, str):
            return 400, {"error": "webhook needs 'message_text'"}
        tag = self.config.trigger_tag
        if tag not in message:
            return 200, {"answered": False, "acknowledged": True}
        question = re.sub(re.escape(tag), " ", message)
        question = " ".join(question.split())
        status, body = self.ask(question)
        if status != 200:
            return status, body
        body = {"answered": True, **body,
                "feedback_request": self.templates.feedback_request.strip()}
        return 200, body

    def health(self) -> tuple[int, dict]:
        return 200, {"status": "ok", "agent": self.model.agent_name,
                     "records": len(self.store)}

    def model_summary(self) -> tuple[int, dict]:
        return 200, {
            "agent_name": self.model.agent_name,
            "overview": self.model.overview,
            "root_task": self.model.root_task,
            "level": self.config.level,
            "counts": {"tasks": len(self.model.tasks),
                       "methods": len(self.model.methods),
                       "knowledge": len(self.model.knowledge)},
        }


_STATIC_TYPES = {".html": "text/html; charset=utf-8",
                 ".js": "application/javascript; charset=utf-8",
                 ".css": "text/css; charset=utf-8",
                 ".map": "application/json; charset=utf-8",
                 ".svg": "image/svg+xml"}


class _Handler(BaseHTTPRequestHandler):
    service: ExplainService  # bound by make_server

    def log_message(self, format: str, *args) -> None:  # keep test output clean
        pass

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None
        return payload if isinstance(payload, dict) else None

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        payload = self._read_json()
        if payload is None:
            self._send_json(400, {"error": "body must be a JSON object"})
            return
        if self.path == "/ask":
            status, body = self.service.ask(payload.get("question"))
        elif self.path == "/feedback":
            status, body = self.service.feedback(payload)
        elif self.path == "/webhook":
            status, body = self.service.webhook(payload)
        else:
            status, body = 404, {"error": f"no such endpoint: {self.path}"}
        self._send_json(status, body)

    def do_GET(self) -> None:  # noqa: N802
        if self.path == "/health":
            status, body = self.service.health()
            self._send_json(status, body)
        elif self.path == "/model/summary":
            status, body = self.service.model_summary()
            self._send_json(status, body)
        elif self.service.config.static_dir is not None:
            self._serve_static()
        else:
            self._send_json(404, {"error": f"no such endpoint: {self.path}"})

    def _serve_static(self) -> None:
        root = self.service.config.static_dir.resolve()
        name = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (root / name).resolve()
        if root not in target.parents and target != root:
            self._send_json(404, {"error": "not found"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type",
                         _STATIC_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def make_server(service: ExplainService, port: int | None = None) -> ThreadingHTTPServer:
    """Build a threaded HTTP server bound to the service; port 0 picks a
    free one (the chosen port is on ``server.server_address``)."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer(("127.0.0.1", service.config.port if port is None else port),
                               handler)


def serve(config: ServiceConfig) -> None:
    service = ExplainService(config)
    server = make_server(service)
    host, port = server.server_address[:2]
    print(f"serving {service.model.agent_name} self-explanations on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
