"""HTTP chat API fronting the runtime.

Endpoints:
    GET  /v1/rails/configs  -> {"configs": [ids]}
    POST /v1/chat           -> {"session_id", "messages", "trace"?}

All mutable state lives in the session store; configs, indexes and
runtimes are immutable shared data. Turns for one session are serialized
behind a per-session lock, so concurrent requests to the same session
observe some serial order.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .appconfig import App, ConfigError, load_app
from .embeddings import ProviderError
from .runtime import DialogueState

DEFAULT_SESSION_TTL_SECONDS = 30 * 60


class BindError(Exception):
    pass


@dataclass
class ChatSession:
    session_id: str
    state: DialogueState
    created_at: float
    last_active: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with idle expiry."""

    def __init__(self, ttl_seconds: float = DEFAULT_SESSION_TTL_SECONDS, clock=time.monotonic):
        self.ttl = ttl_seconds
        self._clock = clock
        self._sessions: dict[str, ChatSession] = {}
        self._guard = threading.Lock()

    def create(self, state: DialogueState) -> ChatSession:
        now = self._clock()
        session = ChatSession(
            session_id=uuid.uuid4().hex, state=state, created_at=now, last_active=now
        )
        with self._guard:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> ChatSession | None:
        now = self._clock()
        with self._guard:
            self._sweep(now)
            session = self._sessions.get(session_id)
            if session is not None:
                session.last_active = now
            return session

    def _sweep(self, now: float) -> None:
        expired = [
            sid for sid, s in self._sessions.items() if now - s.last_active > self.ttl
        ]
        for sid in expired:
            del self._sessions[sid]

    def __len__(self) -> int:
        return len(self._sessions)


class ChatRequest(BaseModel):
    config_id: str
    session_id: str | None = None
    message: str = ""
    trace: bool = False


def create_service(apps: dict[str, App], session_ttl: float = DEFAULT_SESSION_TTL_SECONDS) -> FastAPI:
    service = FastAPI(title="railgate", docs_url=None, redoc_url=None)
    sessions = SessionStore(ttl_seconds=session_ttl)
    service.state.apps = apps
    service.state.sessions = sessions

    @service.get("/v1/rails/configs")
    def list_configs():
        return {"configs": sorted(apps)}

    @service.post("/v1/chat")
    def chat(request: ChatRequest):
        app = apps.get(request.config_id)
        if app is None:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown config_id {request.config_id!r}"},
            )
        if not request.message or not request.message.strip():
            return JSONResponse(status_code=422, content={"error": "message is empty"})

        if request.session_id is None:
            session = sessions.create(app.runtime.new_session())
        else:
            session = sessions.get(request.session_id)
            if session is None:
                return JSONResponse(
                    status_code=404,
                    content={"error": f"unknown session_id {request.session_id!r}"},
                )

        try:
            with session.lock:
                messages = app.runtime.run_turn(session.state, request.message)
                trace = session.state.last_trace
        except ProviderError as err:
            return JSONResponse(status_code=502, content={"error": str(err)})
        except Exception as err:  # unexpected runtime failure -> bad gateway
            return JSONResponse(status_code=502, content={"error": str(err)})

        body: dict = {"session_id": session.session_id, "messages": messages}
        if request.trace and trace is not None:
            body["trace"] = trace.to_dict()
        return body

    return service


def load_apps(root: str | Path) -> dict[str, App]:
    """Load every app directory (containing a config.yml) under `root`.

    A directory that itself holds config.yml is loaded as a single app.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"config folder not found: {root}")
    if (root / "config.yml").is_file():
        app = load_app(root)
        return {app.config.id: app}
    apps: dict[str, App] = {}
    for child in sorted(root.iterdir()):
        if child.is_dir() and (child / "config.yml").is_file():
            app = load_app(child)
            if app.config.id in apps:
                raise ConfigError(f"duplicate app id {app.config.id!r} under {root}")
            apps[app.config.id] = app
    if not apps:
        raise ConfigError(f"no app configs found under {root}")
    return apps


def serve(configs_dir: str | Path, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Launch the chat server over every app found in `configs_dir`."""
    import uvicorn

    apps = load_apps(configs_dir)
    service = create_service(apps)
    try:
        uvicorn.run(service, host=host, port=port, log_level="info")
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}")
