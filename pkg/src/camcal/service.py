"""HTTP service: guided calibration sessions and the calibration-data
query endpoint.

Request bodies are parsed by hand against the strict wire schemas rather
than through framework models, so malformed input maps to the documented
400/422 responses. Session state lives in memory (the store holds the
durable records); each session carries its own lock so two submissions to
one session serialize while distinct sessions stay independent. Idle
sessions are garbage-collected.
"""

from __future__ import annotations

import hmac
import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import guidance, wire
from .board import BoardSpec
from .camera_model import DistortionModel
from .engine import calibrate
from .errors import (
    CamcalError,
    InfeasibleTarget,
    ProtocolError,
    SessionNotCapturing,
)
from .store import (
    CalibStore,
    CalibrationRecord,
    CameraKey,
    ReliabilityThresholds,
)

log = logging.getLogger("camcal.service")

SESSION_TTL_SECONDS = 30 * 60


@dataclass
class ServerConfig:
    storage_path: str
    tokens: tuple[str, ...]
    board: BoardSpec = field(default_factory=BoardSpec)
    n_targets: int = 10
    tau: float | None = None          # None: scale 20 px @ 720p with height
    reliability: ReliabilityThresholds = field(default_factory=ReliabilityThresholds)
    guidance_page_url: str = "/guide"
    host: str = "127.0.0.1"
    port: int = 8077

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        if not self.tokens:
            raise ValueError("at least one API token is required")
        if self.n_targets < guidance.MIN_TARGETS:
            raise ValueError(f"n_targets must be >= {guidance.MIN_TARGETS}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        raw = json.loads(Path(path).read_text())
        board = wire.parse_board(raw["board"]) if "board" in raw else BoardSpec()
        rel = raw.get("reliability", {})
        return cls(
            storage_path=raw["storage_path"],
            tokens=tuple(raw["tokens"]),
            board=board,
            n_targets=raw.get("n_targets", 10),
            tau=raw.get("tau"),
            reliability=ReliabilityThresholds(**rel),
            guidance_page_url=raw.get("guidance_page_url", "/guide"),
            host=raw.get("host", "127.0.0.1"),
            port=raw.get("port", 8077),
        )


@dataclass
class _SessionEntry:
    state: guidance.SessionState
    model: DistortionModel
    tau: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.time)


class _SessionRegistry:
    def __init__(self, ttl: float = SESSION_TTL_SECONDS):
        self._ttl = ttl
        self._lock = threading.Lock()
        self._entries: dict[str, _SessionEntry] = {}

    def add(self, session_id: str, entry: _SessionEntry) -> None:
        with self._lock:
            self._entries[session_id] = entry

    def get(self, session_id: str) -> _SessionEntry | None:
        now = time.time()
        with self._lock:
            stale = [
                sid for sid, e in self._entries.items()
                if now - e.last_access > self._ttl
            ]
            for sid in stale:
                del self._entries[sid]
            entry = self._entries.get(session_id)
            if entry is not None:
                entry.last_access = now
            return entry

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _read_json(request: Request):
    try:
        return json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from None


def create_app(config: ServerConfig, store: CalibStore | None = None) -> FastAPI:
    """Build the application; the store defaults to one rooted at
    ``config.storage_path``."""
    store = store or CalibStore(config.storage_path)
    registry = _SessionRegistry()
    app = FastAPI(title="camcal", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.config = config
    app.state.registry = registry

    def authorized(token) -> bool:
        if not isinstance(token, str):
            return False
        return any(hmac.compare_digest(token, t) for t in config.tokens)

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        start = time.monotonic()
        response = await call_next(request)
        print(
            json.dumps(
                {
                    "ts": round(time.time(), 3),
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": round((time.monotonic() - start) * 1000, 2),
                },
                sort_keys=True,
            ),
            flush=True,
        )
        return response

    @app.post("/api/v1/sessions")
    async def create_session(request: Request):
        try:
            body = await _read_json(request)
            if not isinstance(body, dict):
                raise ProtocolError("body must be a JSON object")
            token = body.pop("token", None)
            if not authorized(token):
                return _error(401, "invalid or missing token")
            key_fields, model = wire.parse_query_request(body)
        except ProtocolError as exc:
            return _error(400, str(exc))
        try:
            key = CameraKey(**key_fields)
        except ValueError as exc:
            return _error(400, str(exc))
        try:
            schedule = guidance.make_schedule(
                config.board, key.img_size, config.n_targets,
                guidance.default_k_guess(key.img_size),
            )
        except InfeasibleTarget as exc:
            return _error(400, f"cannot build a target schedule: {exc}")
        session_id = secrets.token_urlsafe(16)
        state = guidance.SessionState(
            session_id=session_id, camera_key=key, schedule=tuple(schedule)
        )
        tau = config.tau if config.tau is not None else guidance.default_tau(key.img_size)
        registry.add(
            session_id,
            _SessionEntry(
                state=state, model=model or DistortionModel.RECTILINEAR, tau=tau
            ),
        )
        return JSONResponse(
            {"session_id": session_id, "n_targets": len(schedule)}, status_code=201
        )

    @app.get("/api/v1/sessions/{session_id}/target")
    async def get_target(session_id: str):
        entry = registry.get(session_id)
        if entry is None:
            return _error(404, "unknown session")
        with entry.lock:
            target = entry.state.current_target
            if target is None:
                return JSONResponse({"status": entry.state.status.value})
            return JSONResponse(wire.target_json(target))

    @app.post("/api/v1/sessions/{session_id}/keypoints")
    async def submit_keypoints(session_id: str, request: Request):
        entry = registry.get(session_id)
        if entry is None:
            return _error(404, "unknown session")
        try:
            obs = wire.parse_observation(await _read_json(request))
        except ProtocolError as exc:
            return _error(422, str(exc))
        if tuple(obs.img_size) != tuple(entry.state.camera_key.img_size):
            return _error(422, "observation img_size does not match the session")
        with entry.lock:
            if entry.state.status is not guidance.SessionStatus.CAPTURING:
                return _error(409, f"session is {entry.state.status.value}")
            try:
                new_state, outcome = guidance.advance(entry.state, obs, entry.tau)
            except SessionNotCapturing as exc:
                return _error(409, str(exc))
            entry.state = new_state
            remaining = len(new_state.schedule) - new_state.next_index
            if outcome is guidance.AdvanceResult.REJECTED_POSE_MISMATCH:
                return JSONResponse({"status": "pose_mismatch", "remaining": remaining})
            if outcome is guidance.AdvanceResult.ACCEPTED:
                return JSONResponse({"status": "need_more", "remaining": remaining})
            # session complete: fit, persist, serve
            try:
                result = calibrate(
                    list(new_state.collected), config.board, entry.model,
                    new_state.camera_key.img_size,
                )
            except CamcalError as exc:
                entry.state = guidance.SessionState(
                    session_id=new_state.session_id,
                    camera_key=new_state.camera_key,
                    schedule=new_state.schedule,
                    next_index=new_state.next_index,
                    collected=new_state.collected,
                    status=guidance.SessionStatus.FAILED,
                )
                return _error(500, f"calibration failed: {exc}")
            store.put_record(
                CalibrationRecord(
                    key=new_state.camera_key,
                    result=result,
                    keypoints=new_state.collected,
                    board=config.board,
                    created_at=time.time(),
                )
            )
            return JSONResponse(
                {"status": "done", "calibration": wire.query_response_json(result)}
            )

    @app.post("/api/v1/calibrations/query")
    async def query_calibration(request: Request):
        try:
            key_fields, model = wire.parse_query_request(await _read_json(request))
            key = CameraKey(**key_fields)
        except (ProtocolError, ValueError) as exc:
            return _error(400, str(exc))
        records = store.get_records(key, "exact")
        if not records:
            records = store.get_records(key, "closest_resolution")
        redirect = Response(
            status_code=307, headers={"Location": config.guidance_page_url}
        )
        if not records:
            return redirect
        if not store.reliability(records, config.reliability).reliable:
            return redirect
        serve_model = model or records[-1].result.distortion.model
        try:
            pooled = store.pooled_result(records, records[0].board, serve_model)
        except CamcalError:
            return redirect
        return JSONResponse(wire.query_response_json(pooled))

    return app
