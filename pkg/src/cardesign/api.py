"""HTTP + WebSocket service hosting design sessions for the web client.

The service is a thin shell: all design/evolution state lives in Session
objects, one logical owner each. Requests serialize through a per-session
lock; WebSocket streams are read-only fan-out of playback frames. Pacing
(how fast precomputed trajectories play back) is purely presentational and
never touches the deterministic core.
"""
from __future__ import annotations

import asyncio
import math
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from .errors import CarDesignError, ValidationError
from .genome import DesignConfig, design_from_text, design_to_text, CarGenome
from .session import (APP_VERSION, LOG_FORMAT, Session, SessionConfig,
                      apply_action, compute_metrics, field_config, lab_config)

DATA_DIR_ENV = "CARDESIGN_DATA_DIR"


@dataclass
class ManagedSession:
    session: Session
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    playback_t: float = 0.0
    time_scale: float = 1.0
    auto_advance: bool = True
    paused: bool = False
    subscribers: set = field(default_factory=set)
    runner: asyncio.Task | None = None

    @property
    def progress(self) -> float:
        duration = self.session.config.sim.duration
        return min(1.0, self.playback_t / duration)


def _sample_at(samples: list[list[float]], t: float) -> list[float]:
    """Nearest trajectory sample at playback time t."""
    if not samples:
        return [t, 0.0, 0.0, 0.0]
    lo, hi = 0, len(samples) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if samples[mid][0] <= t:
            lo = mid
        else:
            hi = mid
    return samples[hi] if abs(samples[hi][0] - t) < abs(samples[lo][0] - t) \
        else samples[lo]


def _frame(ms: ManagedSession) -> dict:
    """Live playback frame: poses and scores-so-far for the 12 designs."""
    t = ms.playback_t
    designs = []
    for traj in ms.session.current_trajectories():
        sample = _sample_at(traj["samples"], t)
        fcx = traj["first_contact_x"]
        score = None
        if not traj["diverged"] and fcx is not None:
            score = sample[1] - fcx
        designs.append({"ref": traj["ref"], "slot": traj["slot"],
                        "diverged": traj["diverged"],
                        "x": sample[1], "y": sample[2], "angle": sample[3],
                        "wheel_angles": sample[4:], "score": score})
    return {"type": "frame", "t": t, "progress": ms.progress,
            "generation": ms.session.current.index, "designs": designs}


def _broadcast(ms: ManagedSession, message: dict) -> None:
    for queue in list(ms.subscribers):
        try:
            queue.put_nowait(message)
        except asyncio.QueueFull:
            pass


async def _run_playback(ms: ManagedSession) -> None:
    """Owner loop: walks the current generation's precomputed trajectories in
    wall time and auto-advances at the end of each playback."""
    tick = 0.1
    try:
        while not ms.session.ended:
            await asyncio.sleep(tick)
            if ms.paused:
                continue
            ms.playback_t += tick * ms.time_scale
            duration = ms.session.config.sim.duration
            if ms.playback_t >= duration:
                ms.playback_t = duration
                _broadcast(ms, _frame(ms))
                if not ms.auto_advance:
                    continue
                async with ms.lock:
                    gen = ms.session.advance_generation()
                ms.playback_t = 0.0
                if gen is None:
                    _broadcast(ms, {"type": "finished",
                                    "generation": ms.session.current.index})
                    return
                fitness = [None if r.diverged else r.fitness
                           for r in gen.results]
                _broadcast(ms, {"type": "generation", "index": gen.index,
                                "refs": gen.refs, "fitness": fitness})
            else:
                _broadcast(ms, _frame(ms))
    except asyncio.CancelledError:
        pass


def _config_from_request(body: dict) -> SessionConfig:
    mode = body.get("mode", "field")
    seed = int(body.get("seed", 0))
    if mode == "lab":
        return lab_config(seed)
    design = DesignConfig(nv=int(body.get("nv", 7)), nw=int(body.get("nw", 4)),
                          course_id=body.get("course", "HillClimb"))
    cap = body.get("generation_cap")
    return field_config(seed, design=design,
                        generation_cap=None if cap is None else int(cap))


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cardesign service", version=APP_VERSION)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, ManagedSession] = {}
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
    data_dir = Path(data_dir) if data_dir else None
    if data_dir:
        data_dir.mkdir(parents=True, exist_ok=True)
    app.state.sessions = sessions

    def managed(session_id: str) -> ManagedSession:
        ms = sessions.get(session_id)
        if ms is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return ms

    @app.get("/health")
    def health():
        return {"app_version": APP_VERSION, "log_format": LOG_FORMAT,
                "sessions": len(sessions)}

    @app.post("/sessions")
    async def create_session(body: dict):
        try:
            config = _config_from_request(body)
            session_id = uuid.uuid4().hex[:12]
            log_path = data_dir / f"session-{session_id}.jsonl" if data_dir else None
            session = Session(config, log_path=log_path,
                              created_at=body.get("created_at"))
            session.start()
        except CarDesignError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        ms = ManagedSession(session=session,
                            time_scale=float(body.get("time_scale", 1.0)),
                            auto_advance=bool(body.get("auto_advance", True)))
        sessions[session_id] = ms
        ms.runner = asyncio.create_task(_run_playback(ms))
        return {"session_id": session_id, "state": _state_payload(session_id, ms)}

    def _state_payload(session_id: str, ms: ManagedSession) -> dict:
        state = ms.session.public_state()
        state.update(session_id=session_id, progress=ms.progress,
                     paused=ms.paused, auto_advance=ms.auto_advance,
                     time_scale=ms.time_scale)
        return state

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str):
        ms = managed(session_id)
        async with ms.lock:
            return _state_payload(session_id, ms)

    @app.post("/sessions/{session_id}/actions")
    async def post_action(session_id: str, body: dict):
        ms = managed(session_id)
        action = body.get("action", body)
        t = body.get("t")
        kind = action.get("kind")
        async with ms.lock:
            if kind == "set_auto_advance":
                ms.auto_advance = bool(action["value"])
                return {"applied": True}
            if kind == "set_paused":
                ms.paused = bool(action["value"])
                return {"applied": True}
            if kind == "set_time_scale":
                value = float(action["value"])
                if not (value > 0 and math.isfinite(value)):
                    raise HTTPException(status_code=400,
                                        detail="time_scale must be positive")
                ms.time_scale = value
                return {"applied": True}
            try:
                if kind == "advance":
                    gen = ms.session.advance_generation()
                    ms.playback_t = 0.0
                    if gen is not None:
                        fitness = [None if r.diverged else r.fitness
                                   for r in gen.results]
                        _broadcast(ms, {"type": "generation", "index": gen.index,
                                        "refs": gen.refs, "fitness": fitness})
                    return {"applied": gen is not None}
                applied = apply_action(ms.session, action, t)
            except CarDesignError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"applied": bool(applied)}

    @app.post("/sessions/{session_id}/designs/export")
    async def export_design(session_id: str, body: dict):
        ms = managed(session_id)
        async with ms.lock:
            try:
                if "ref" in body and body["ref"] is not None:
                    ref = int(body["ref"])
                    if not ms.session.history.contains(ref):
                        raise HTTPException(status_code=404,
                                            detail=f"unknown design ref {ref}")
                    genome = ms.session.history[ref].genome
                else:
                    genome = CarGenome.from_vector(
                        [float(g) for g in body["genes"]],
                        ms.session.config.design)
                text = design_to_text(genome, ms.session.config.design)
            except CarDesignError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"design": text}

    @app.post("/sessions/{session_id}/designs/import")
    async def import_design(session_id: str, body: dict):
        ms = managed(session_id)
        try:
            genome, config = design_from_text(body["design"])
        except CarDesignError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        ours = ms.session.config.design
        if (config.nv, config.nw) != (ours.nv, ours.nw):
            raise HTTPException(
                status_code=400,
                detail=f"design is {config.nv}v/{config.nw}w, session runs "
                       f"{ours.nv}v/{ours.nw}w")
        return {"genes": genome.to_vector()}

    @app.post("/sessions/{session_id}/end")
    async def end_session(session_id: str, body: dict | None = None):
        ms = managed(session_id)
        async with ms.lock:
            ms.session.end((body or {}).get("t"))
        if ms.runner is not None:
            ms.runner.cancel()
        metrics = compute_metrics(ms.session.header, ms.session.events)
        del sessions[session_id]
        return {"metrics": metrics.to_record()}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        ms = sessions.get(session_id)
        await websocket.accept()
        if ms is None:
            await websocket.close(code=4404)
            return
        queue: asyncio.Queue = asyncio.Queue(maxsize=64)
        ms.subscribers.add(queue)
        try:
            await websocket.send_json(_frame(ms))
            while True:
                message = await queue.get()
                await websocket.send_json(message)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            ms.subscribers.discard(queue)

    return app


app = create_app()
