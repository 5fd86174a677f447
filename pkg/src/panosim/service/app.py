"""FastAPI service wrapping the simulator.

One embodied-environment session per WebSocket connection (resumable for a
grace period after disconnect), plus stateless REST endpoints for health,
asset info, and one-shot view rendering. The browser teleop client and the
programmatic client speak the same wire protocol, so trajectories are
identical either way.
"""

from __future__ import annotations

import asyncio
import base64
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..bvh import BVH
from ..dataset import PanoramaDataset, rgb_to_u8, write_ppm
from ..env import EmbodiedEnv, ObsConfig, TaskSpec
from ..errors import EpisodeStateError, PanosimError
from ..geometry import Pose6D
from ..ibr import RenderConfig, render_view
from ..scene_metrics import OccupancyGrid
from .protocol import (
    MAX_MESSAGE_BYTES,
    MODALITY_CODES,
    PROTOCOL_VERSION,
    encode_frame,
)


@dataclass
class ServiceAssets:
    bvh: BVH
    dataset: PanoramaDataset | None = None
    grid: OccupancyGrid | None = None
    task: TaskSpec = field(default_factory=TaskSpec)
    obs: ObsConfig = field(default_factory=ObsConfig)
    record_dir: Path | None = None


@dataclass
class _Session:
    env: EmbodiedEnv
    session_id: str
    modalities: list[str]
    frame_id: int = 0
    last_seen: float = 0.0
    connected: bool = False


class HealthResponse(BaseModel):
    status: str = "ok"


class InfoResponse(BaseModel):
    protocol: int
    faces: int
    panoramas: int
    obs_height: int
    modalities: list[str]
    task: dict


class RenderRequest(BaseModel):
    pose: list[float] = Field(min_length=6, max_length=6)
    k: int = 4
    lambda_d: float = 1.0
    depth_eps: float = 0.1
    height: int = 64


class RenderResponse(BaseModel):
    width: int
    height: int
    rgb_ppm_b64: str
    disocclusion_fraction: float


def _error(message: str, detail: str = "") -> str:
    return json.dumps({"type": "error", "error": message, "detail": detail})


def create_app(assets: ServiceAssets, heartbeat_interval: float = 1.0,
               resume_ttl: float = 60.0, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="panosim", version="0.1.0")
    sessions: dict[str, _Session] = {}

    def purge_sessions(now: float):
        dead = [sid for sid, s in sessions.items()
                if not s.connected and now - s.last_seen > resume_ttl]
        for sid in dead:
            del sessions[sid]

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.get("/info", response_model=InfoResponse)
    def info():
        return InfoResponse(
            protocol=PROTOCOL_VERSION,
            faces=assets.bvh.mesh.n_faces,
            panoramas=len(assets.dataset) if assets.dataset else 0,
            obs_height=assets.obs.height,
            modalities=list(assets.obs.modalities),
            task=assets.task.to_json(),
        )

    @app.post("/render", response_model=RenderResponse)
    def render(req: RenderRequest):
        if assets.dataset is None:
            raise PanosimError("service has no panorama dataset loaded")
        cfg = RenderConfig(k=req.k, lambda_d=req.lambda_d, depth_eps=req.depth_eps,
                           width=2 * req.height, height=req.height)
        result = render_view(assets.dataset, assets.bvh,
                             Pose6D.from_list(req.pose), cfg)
        import io

        buf = io.BytesIO()
        h, w = result.rgb.height, result.rgb.width
        buf.write(f"P6\n{w} {h}\n255\n".encode())
        buf.write(rgb_to_u8(result.rgb.data).tobytes())
        return RenderResponse(
            width=w, height=h,
            rgb_ppm_b64=base64.b64encode(buf.getvalue()).decode("ascii"),
            disocclusion_fraction=float(result.disocclusion.mean()),
        )

    async def send_frames(ws: WebSocket, session: _Session, reward: float):
        obs = session.env.observe(tuple(session.modalities))
        for modality in session.modalities:
            frame = encode_frame(session.frame_id, modality, reward,
                                 obs.images[modality])
            session.frame_id += 1
            await ws.send_bytes(frame)
        return obs

    @app.websocket("/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        now = time.monotonic()
        purge_sessions(now)

        # handshake: first message must be hello with a matching protocol
        try:
            raw = await ws.receive_text()
            hello = json.loads(raw)
        except (WebSocketDisconnect, json.JSONDecodeError):
            await ws.close(code=4000, reason="expected a hello message")
            return
        if hello.get("type") != "hello":
            await ws.send_text(_error("handshake_required", "first message must be hello"))
            await ws.close(code=4000, reason="expected a hello message")
            return
        if hello.get("protocol") != PROTOCOL_VERSION:
            await ws.send_text(_error(
                "protocol_mismatch",
                f"server speaks protocol {PROTOCOL_VERSION}, client sent "
                f"{hello.get('protocol')!r}",
            ))
            await ws.close(code=4001, reason=f"protocol {PROTOCOL_VERSION} required")
            return

        resumed = False
        sid = hello.get("session")
        if sid and sid in sessions and not sessions[sid].connected:
            session = sessions[sid]
            resumed = True
        else:
            sid = uuid.uuid4().hex
            env = EmbodiedEnv(assets.bvh, assets.task, assets.obs,
                              dataset=assets.dataset, grid=assets.grid)
            session = _Session(env, sid, list(assets.obs.modalities))
            sessions[sid] = session
        session.connected = True
        session.last_seen = now
        await ws.send_text(json.dumps({
            "type": "welcome", "session": sid,
            "protocol": PROTOCOL_VERSION, "resumed": resumed,
            "modalities": session.modalities,
        }))

        async def heartbeat():
            while True:
                await asyncio.sleep(heartbeat_interval)
                await ws.send_text(json.dumps({"type": "heartbeat",
                                               "t": time.time()}))

        beat = asyncio.create_task(heartbeat())
        try:
            while True:
                raw = await ws.receive_text()
                if len(raw.encode("utf-8", errors="ignore")) > MAX_MESSAGE_BYTES:
                    await ws.send_text(_error("message_too_large",
                                              f"limit is {MAX_MESSAGE_BYTES} bytes"))
                    continue
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as e:
                    await ws.send_text(_error("bad_json", str(e)))
                    continue
                session.last_seen = time.monotonic()
                await handle_message(ws, session, msg)
        except WebSocketDisconnect:
            pass
        finally:
            beat.cancel()
            session.connected = False
            session.last_seen = time.monotonic()

    async def handle_message(ws: WebSocket, session: _Session, msg: dict):
        kind = msg.get("type")
        if kind == "ping":
            await ws.send_text(json.dumps({"type": "pong",
                                           "nonce": msg.get("nonce")}))
        elif kind == "reset":
            obs = session.env.reset(int(msg.get("seed", 0)))
            await ws.send_text(json.dumps({
                "type": "reset_result", "step": 0,
                "sensors": list(obs.sensors),
            }))
            await send_frames(ws, session, 0.0)
        elif kind == "step":
            action = msg.get("action")
            try:
                result = session.env.step(action)
            except EpisodeStateError as e:
                await ws.send_text(_error("episode_done", str(e)))
                return
            except ValueError as e:
                await ws.send_text(_error("bad_action", str(e)))
                return
            await ws.send_text(json.dumps({
                "type": "step_result",
                "reward": result.reward,
                "done": result.done,
                "info": result.info,
                "sensors": list(result.observation.sensors),
            }))
            await send_frames(ws, session, result.reward)
        elif kind == "set_modality":
            wanted = msg.get("modalities", [])
            bad = [m for m in wanted if m not in MODALITY_CODES]
            if bad:
                await ws.send_text(_error("bad_modality", f"unknown: {bad}"))
                return
            session.modalities = list(wanted)
            await ws.send_text(json.dumps({"type": "modality_set",
                                           "modalities": session.modalities}))
            if session.env.state is not None and wanted:
                await send_frames(ws, session, 0.0)
        elif kind == "save_trajectory":
            if assets.record_dir is None:
                await ws.send_text(_error("recording_disabled",
                                          "serve was started without --record-dir"))
                return
            name = str(msg.get("name", "trajectory"))
            safe = "".join(c for c in name if c.isalnum() or c in "-_") or "trajectory"
            path = Path(assets.record_dir) / f"{safe}.json"
            try:
                session.env.save_trajectory(path)
            except EpisodeStateError as e:
                await ws.send_text(_error("no_episode", str(e)))
                return
            await ws.send_text(json.dumps({"type": "trajectory_saved",
                                           "path": str(path)}))
        else:
            await ws.send_text(_error("unknown_type", f"got {kind!r}"))

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
