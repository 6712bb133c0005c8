"""Streaming generation service.

One websocket connection hosts one session. The client pulls frames with
`step` messages; the server never generates ahead on its own. Text updates
and joining agents take effect from the next window. Every client message
is answered by `session`, `frames`, `ack`, or `error`; malformed or
out-of-order messages produce an `error` and leave the session usable.

Client -> server message types: start, text, step, add_agent, stop.
Server -> client message types: session, frames, ack, error.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .data.synth import default_seed_poses
from .engine import (
    GenerationSession,
    SessionModels,
    add_agent,
    init_session,
    models_from_checkpoint,
    roll_window,
    update_text,
)
from .errors import DataError, HintError, SessionError
from .textcond import ToyTextEncoder

log = logging.getLogger("hint.service")

ENV_CHECKPOINT_DIR = "HINT_CHECKPOINT_DIR"
DEFAULT_CHECKPOINT_NAME = "diffusion.hckpt"
MAX_TEXT_LEN = 2000
MAX_WINDOWS_PER_STEP = 64

_LAYOUT_ALIASES = {"synthetic-8": "interhuman-style:8"}


def layout_name(layout) -> str:
    return f"{layout.kind}:{layout.joint_count}"


def default_checkpoint_path() -> Path:
    root = os.environ.get(ENV_CHECKPOINT_DIR, ".")
    return Path(root) / DEFAULT_CHECKPOINT_NAME


class ProtocolError(HintError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _field(msg: dict, name: str, kind, required=True, default=None):
    if name not in msg or msg[name] is None:
        if required:
            raise ProtocolError("bad_request", f"missing field {name!r}")
        return default
    value = msg[name]
    if kind is int and isinstance(value, bool):
        raise ProtocolError("bad_request", f"field {name!r} must be {kind.__name__}")
    if not isinstance(value, kind):
        raise ProtocolError("bad_request", f"field {name!r} must be {kind.__name__}")
    return value


class SessionHandle:
    """Mutable per-connection state around one engine session."""

    def __init__(self):
        self.session: GenerationSession | None = None
        self.session_id: str | None = None
        self.full_features = False
        self.stopped = False


def _frames_message(handle: SessionHandle, window_index: int, outputs: dict) -> dict:
    layout = handle.session.layout
    agents = []
    for agent_id in sorted(outputs):
        block = outputs[agent_id]
        entry = {"id": agent_id, "joints": layout.positions(block).tolist()}
        if handle.full_features:
            entry["features"] = block.tolist()
        agents.append(entry)
    return {"type": "frames", "window_index": window_index, "agents": agents}


def _check_text(text: str) -> str:
    if len(text) > MAX_TEXT_LEN:
        raise ProtocolError("bad_request", f"text longer than {MAX_TEXT_LEN} chars")
    return text


def create_app(
    checkpoint=None,
    max_sessions: int = 8,
    max_agents: int = 8,
    idle_timeout: float = 300.0,
    encoder=None,
) -> FastAPI:
    """Build the service around one diffusion checkpoint.

    `checkpoint` may be a path, a loaded checkpoint, or a SessionModels
    bundle; when omitted it resolves to $HINT_CHECKPOINT_DIR/diffusion.hckpt.
    """
    if isinstance(checkpoint, SessionModels):
        models = checkpoint
    else:
        models = models_from_checkpoint(
            checkpoint if checkpoint is not None else default_checkpoint_path()
        )
    encoder = encoder or ToyTextEncoder()
    app = FastAPI()
    app.state.models = models
    app.state.encoder = encoder
    app.state.max_sessions = max_sessions
    app.state.max_agents = max_agents
    app.state.idle_timeout = idle_timeout
    app.state.active_sessions: set[str] = set()

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "layout": layout_name(models.layout),
            "h": models.vae.cfg.h,
            "k": models.vae.cfg.k,
            "fps": models.layout.frame_rate,
            "checksums": {
                k: v for k, v in models.checksums.items() if k in ("params", "vae_freeze")
            },
            "max_sessions": max_sessions,
            "active_sessions": len(app.state.active_sessions),
        }

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        handle = SessionHandle()
        try:
            while True:
                try:
                    raw = await asyncio.wait_for(
                        ws.receive_text(), timeout=app.state.idle_timeout
                    )
                except asyncio.TimeoutError:
                    await ws.close(code=1001)
                    break
                await _dispatch(app, ws, handle, raw)
        except WebSocketDisconnect:
            pass
        finally:
            if handle.session_id is not None:
                app.state.active_sessions.discard(handle.session_id)

    return app


async def _dispatch(app: FastAPI, ws: WebSocket, handle: SessionHandle, raw: str) -> None:
    async def send_error(code: str, message: str):
        await ws.send_json({"type": "error", "code": code, "message": message})

    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as e:
        await send_error("bad_json", f"invalid JSON: {e}")
        return
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        await send_error("bad_json", "message must be an object with a string 'type'")
        return
    mtype = msg["type"]
    try:
        if mtype == "start":
            await _handle_start(app, ws, handle, msg)
        elif mtype in ("text", "step", "add_agent", "stop"):
            if handle.stopped:
                raise ProtocolError("session_closed", "session already stopped")
            if handle.session is None:
                raise ProtocolError("protocol", f"{mtype!r} before 'start'")
            if mtype == "text":
                await _handle_text(ws, handle, msg)
            elif mtype == "step":
                await _handle_step(ws, handle, msg)
            elif mtype == "add_agent":
                await _handle_add_agent(app, ws, handle, msg)
            else:
                await _handle_stop(app, ws, handle)
        else:
            raise ProtocolError("unknown_type", f"unknown message type {mtype!r}")
    except ProtocolError as e:
        await send_error(e.code, str(e))
    except (SessionError, DataError) as e:
        await send_error("bad_request", str(e))
    except Exception:  # per-session fault isolation: report, keep serving
        log.exception("internal error handling %r", mtype)
        await send_error("internal", "internal error, session kept alive")


async def _handle_start(app: FastAPI, ws: WebSocket, handle: SessionHandle, msg: dict) -> None:
    if handle.session is not None:
        raise ProtocolError("protocol", "session already started")
    if len(app.state.active_sessions) >= app.state.max_sessions:
        raise ProtocolError("bad_request", "server session limit reached")
    models: SessionModels = app.state.models
    n_agents = _field(msg, "agents", int)
    if not 1 <= n_agents <= app.state.max_agents:
        raise ProtocolError(
            "bad_request", f"agents must be in 1..{app.state.max_agents}, got {n_agents}"
        )
    text = _check_text(_field(msg, "text", str, required=False, default=""))
    seed = _field(msg, "seed", int, required=False, default=0)
    if seed < 0:
        raise ProtocolError("bad_request", "seed must be >= 0")
    total_frames = _field(msg, "total_frames", int, required=False)
    if total_frames is not None and total_frames < 1:
        raise ProtocolError("bad_request", "total_frames must be >= 1 or null")
    requested_layout = _field(msg, "layout", str, required=False)
    if requested_layout is not None:
        resolved = _LAYOUT_ALIASES.get(requested_layout, requested_layout)
        if resolved != layout_name(models.layout):
            raise ProtocolError(
                "bad_request",
                f"layout {requested_layout!r} does not match the served model "
                f"({layout_name(models.layout)})",
            )
    handle.full_features = bool(msg.get("full_features", False))

    poses = default_seed_poses(models.layout, n_agents)
    handle.session = init_session(
        models.vae,
        models.denoiser,
        models.schedule,
        models.normalizer,
        models.layout,
        app.state.encoder,
        [(f"agent-{i}", pose) for i, pose in enumerate(poses)],
        text,
        total_frames,
        seed,
        max_agents=app.state.max_agents,
    )
    handle.session_id = uuid.uuid4().hex
    app.state.active_sessions.add(handle.session_id)
    await ws.send_json(
        {
            "type": "session",
            "session_id": handle.session_id,
            "h": handle.session.h,
            "k": handle.session.k,
            "fps": models.layout.frame_rate,
            "agents": sorted(handle.session.agents),
            "total_frames": total_frames,
        }
    )


async def _handle_text(ws: WebSocket, handle: SessionHandle, msg: dict) -> None:
    text = _check_text(_field(msg, "text", str))
    scope = _field(msg, "scope", str, required=False, default="global")
    if scope == "global":
        result = update_text(handle.session, text, "global")
    elif scope == "agent":
        agent = _field(msg, "agent", str)
        result = update_text(handle.session, text, agent)
    else:
        raise ProtocolError("bad_request", f"scope must be 'global' or 'agent', got {scope!r}")
    await ws.send_json(
        {
            "type": "ack",
            "of": "text",
            "window_index": result["window_index"],
            "scope": result["scope"],
        }
    )


async def _handle_step(ws: WebSocket, handle: SessionHandle, msg: dict) -> None:
    windows = _field(msg, "windows", int, required=False, default=1)
    if not 1 <= windows <= MAX_WINDOWS_PER_STEP:
        raise ProtocolError(
            "bad_request", f"windows must be in 1..{MAX_WINDOWS_PER_STEP}, got {windows}"
        )
    session = handle.session
    generated = 0
    for _ in range(windows):
        limit = session.window_limit
        if limit is not None and session.window_index >= limit:
            break
        w = session.window_index
        outputs = await asyncio.to_thread(roll_window, session)
        await ws.send_json(_frames_message(handle, w, outputs))
        generated += 1
    if generated < windows:
        raise ProtocolError(
            "exhausted",
            f"session exhausted after {session.window_index} windows"
            + (f"; {generated} of {windows} generated" if generated else ""),
        )
    await ws.send_json({"type": "ack", "of": "step", "windows": generated})


async def _handle_add_agent(app: FastAPI, ws: WebSocket, handle: SessionHandle, msg: dict) -> None:
    session = handle.session
    text = msg.get("text")
    if text is not None:
        text = _check_text(_field(msg, "text", str))
    agent_id = _field(msg, "id", str, required=False)
    pose = msg.get("pose")
    if pose is None:
        pose = default_seed_poses(session.layout, len(session.agents) + 1)[-1]
    else:
        try:
            pose = np.asarray(pose, dtype=np.float32)
        except (TypeError, ValueError) as e:
            raise ProtocolError("bad_request", f"pose is not a numeric matrix: {e}") from e
    new_id = add_agent(session, pose, agent_id=agent_id, text=text)
    await ws.send_json(
        {"type": "ack", "of": "add_agent", "id": new_id, "window_index": session.window_index}
    )


async def _handle_stop(app: FastAPI, ws: WebSocket, handle: SessionHandle) -> None:
    handle.stopped = True
    if handle.session_id is not None:
        app.state.active_sessions.discard(handle.session_id)
    await ws.send_json(
        {"type": "ack", "of": "stop", "transcript": list(handle.session.transcript)}
    )
