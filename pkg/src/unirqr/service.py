"""HTTP/JSON chat API over the pipeline, plus static console serving.

Endpoints:
    POST /api/sessions                  {"mode": "auto"|"always_retrieve"|"never_retrieve"}
    POST /api/sessions/{id}/messages    {"text": "..."}
    GET  /api/sessions/{id}
    GET  /api/health
    GET  /console/*                     static files for the web console

Turn responses carry the full trace: decision ("no_query"|"query"), query,
knowledge, response, timings{rd_qg_ms, search_ms, rg_ms}.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import kernels
from .generate import DecodingConfig
from .model import TinyReferenceModel
from .pipeline import ForceMode, PipelineError, respond
from .retrieval import Retriever
from .types import DialogueTurn, Speaker


@dataclass
class ChatSession:
    id: str
    mode: ForceMode
    created_at: float
    updated_at: float
    turns: list[DialogueTurn] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "session_id": self.id,
            "mode": self.mode.value,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "turns": [{"speaker": t.speaker.value, "text": t.text} for t in self.turns],
            "traces": self.traces,
        }


class SessionStore:
    """In-memory session registry with optional JSON-lines persistence."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.sessions: dict[str, ChatSession] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        if self.path and self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["event"] == "create":
                    session = ChatSession(
                        id=event["session_id"], mode=ForceMode(event["mode"]),
                        created_at=event["ts"], updated_at=event["ts"])
                    self.sessions[session.id] = session
                    self.locks[session.id] = threading.Lock()
                elif event["event"] == "turn" and event["session_id"] in self.sessions:
                    session = self.sessions[event["session_id"]]
                    session.turns.append(DialogueTurn(Speaker.USER, event["user_text"]))
                    session.turns.append(
                        DialogueTurn(Speaker.BOT, event["trace"]["response"] or "..."))
                    session.traces.append(event["trace"])
                    session.updated_at = event["ts"]

    def _persist(self, event: dict) -> None:
        if self.path:
            with self._registry_lock:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def create(self, mode: ForceMode) -> ChatSession:
        session_id = uuid.uuid4().hex
        now = time.time()
        session = ChatSession(id=session_id, mode=mode, created_at=now, updated_at=now)
        with self._registry_lock:
            self.sessions[session_id] = session
            self.locks[session_id] = threading.Lock()
        self._persist({"event": "create", "session_id": session_id,
                       "mode": mode.value, "ts": now})
        return session

    def get(self, session_id: str) -> ChatSession | None:
        return self.sessions.get(session_id)

    def lock(self, session_id: str) -> threading.Lock:
        return self.locks[session_id]

    def record_turn(self, session: ChatSession, user_text: str, trace: dict) -> None:
        now = time.time()
        session.turns.append(DialogueTurn(Speaker.USER, user_text))
        session.turns.append(DialogueTurn(Speaker.BOT, trace["response"] or "..."))
        session.traces.append(trace)
        session.updated_at = now
        self._persist({"event": "turn", "session_id": session.id,
                       "user_text": user_text, "trace": trace, "ts": now})


@dataclass
class ServiceConfig:
    max_context_turns: int = 5
    knowledge_budget_tokens: int = 64
    search_limit: int = 3
    default_mode: ForceMode = ForceMode.AUTO
    static_dir: str | Path | None = None


class ChatService:
    """Request-independent application state shared by all handler threads."""

    def __init__(self, model: TinyReferenceModel | None, retriever: Retriever | None,
                 decoding: DecodingConfig, store: SessionStore,
                 config: ServiceConfig | None = None):
        self.model = model
        self.retriever = retriever
        self.decoding = decoding
        self.store = store
        self.config = config or ServiceConfig()

    def run_turn(self, session: ChatSession, user_text: str) -> dict:
        with self.store.lock(session.id):
            context = session.turns + [DialogueTurn(Speaker.USER, user_text)]
            trace = respond(
                context, self.model, self.retriever, self.model.scheme,
                self.decoding, mode=session.mode,
                max_context_turns=self.config.max_context_turns,
                knowledge_budget_tokens=self.config.knowledge_budget_tokens,
                search_limit=self.config.search_limit)
            wire = trace.to_dict()
            self.store.record_turn(session, user_text, wire)
            return wire


_SESSION_MSG = re.compile(r"^/api/sessions/([0-9a-f]+)/messages$")
_SESSION = re.compile(r"^/api/sessions/([0-9a-f]+)$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".png": "image/png",
}


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "unirqr"

    @property
    def service(self) -> ChatService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError:
            return {}

    def do_GET(self):
        if self.path == "/api/health":
            self._send_json(200, {
                "status": "ok",
                "model_loaded": self.service.model is not None,
                "kernel_backend": kernels.BACKEND,
            })
            return
        match = _SESSION.match(self.path)
        if match:
            session = self.service.store.get(match.group(1))
            if session is None:
                self._send_json(404, {"error": "unknown session"})
            else:
                self._send_json(200, session.to_dict())
            return
        if self.path == "/" or self.path.startswith("/console"):
            self._serve_static()
            return
        self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path == "/api/sessions":
            if self.service.model is None:
                self._send_json(503, {"error": "no model loaded"})
                return
            body = self._read_json()
            try:
                mode = ForceMode(body.get("mode", self.service.config.default_mode.value))
            except ValueError:
                self._send_json(400, {"error": "unknown mode"})
                return
            session = self.service.store.create(mode)
            self._send_json(200, {"session_id": session.id, "mode": mode.value})
            return
        match = _SESSION_MSG.match(self.path)
        if match:
            session = self.service.store.get(match.group(1))
            if session is None:
                self._send_json(404, {"error": "unknown session"})
                return
            if self.service.model is None:
                self._send_json(503, {"error": "no model loaded"})
                return
            text = (self._read_json().get("text") or "").strip()
            if not text:
                self._send_json(400, {"error": "text must be non-empty"})
                return
            try:
                wire = self.service.run_turn(session, text)
            except PipelineError as exc:
                self._send_json(500, {"error": str(exc), "partial": exc.partial_wire()})
                return
            wire["session_id"] = session.id
            self._send_json(200, wire)
            return
        self._send_json(404, {"error": "not found"})

    def _serve_static(self):
        static_dir = self.service.config.static_dir
        if not static_dir:
            self._send_json(404, {"error": "console bundle not configured"})
            return
        root = Path(static_dir).resolve()
        rel = self.path[len("/console"):] if self.path.startswith("/console") else ""
        rel = rel.split("?")[0].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._send_json(404, {"error": "not found"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type",
                         _CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ChatServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: ChatService):
        super().__init__(address, ApiHandler)
        self.service = service


def start_server(service: ChatService, host: str = "127.0.0.1",
                 port: int = 0) -> tuple[ChatServer, threading.Thread]:
    """Start the server on a background thread; port 0 picks a free port."""
    server = ChatServer((host, port), service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
