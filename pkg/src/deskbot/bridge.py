"""Websocket service exposing the sim/firmware/policy loop to clients.

`BridgeSession` is the synchronous core: it owns the world, the firmware
rig, an optional driving network, and an optional demo logger, and advances
everything one 50 ms control period per `tick()`. The asyncio layer on top
(`build_app` / `serve`) only moves JSON text and PNG binary frames between
websocket clients and the session; one shared stepping loop owns all
mutable state, so client handlers never touch the sim concurrently.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from io import BytesIO
from pathlib import Path

import numpy as np

try:  # the service layer is optional; the session core stays importable
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import JSONResponse
    from fastapi.staticfiles import StaticFiles
except ImportError:  # pragma: no cover - exercised only without fastapi
    FastAPI = None  # type: ignore[assignment]

import importlib.resources

import jsonschema
from PIL import Image

from . import __version__, datakit
from .datakit import (
    CONTROL_DT,
    CONTROL_HZ,
    NoiseProcess,
    NoiseSchedule,
    SessionWriter,
    apply_steering_delta,
    sim_config_hash,
    to_uint8,
)
from .follow import FollowState, select_target, servo, sim_detections
from .neuralnet.policy import DrivingPolicy, PolicyArch
from .neuralnet.weights_io import load_policy
from .rig import Rig
from .simcore import (
    Action,
    CameraConfig,
    DEFAULT_CAMERA,
    builtin_route,
    command_onehot,
    render_camera,
    sonar_distance,
)

INTERACTIVE_MODES = ("teleop", "policy", "follow")
MODES = INTERACTIVE_MODES + ("collect", "eval")


def load_protocol_schema() -> dict:
    """The shared client/server message schema bundled with the package."""
    text = (
        importlib.resources.files("deskbot") / "schema" / "bridge.schema.json"
    ).read_text()
    return json.loads(text)


_SCHEMA = load_protocol_schema()
_CLIENT_VALIDATOR = jsonschema.Draft202012Validator(_SCHEMA)


@dataclass
class SessionConfig:
    """Everything the bridge needs to host one session."""

    mode: str = "teleop"
    route: str = "R1"
    seed: int = 0
    weights: str | None = None
    noise: bool = False
    obstacles: bool = False
    port: int = 8800
    out: str | None = None  # demo-session parent directory
    camera: CameraConfig = field(default_factory=lambda: DEFAULT_CAMERA)
    realtime: bool = True  # pace ticks at 20 Hz wall-clock

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (1024 <= self.port <= 65535):
            raise ValueError(f"port must be in [1024, 65535], got {self.port}")
        if self.mode == "policy" and not self.weights:
            raise ValueError("policy mode requires a weights path")


def _arch_for_camera(camera: CameraConfig) -> PolicyArch:
    return PolicyArch(input_width=camera.width, input_height=camera.height)


class BridgeSession:
    """One simulated robot, steppable at the control rate."""

    def __init__(self, config: SessionConfig):
        if config.mode not in INTERACTIVE_MODES:
            raise ValueError(f"interactive session cannot run mode {config.mode!r}")
        self.config = config
        route_name = "LOOP" if config.mode == "follow" else config.route
        self.world, self.route = builtin_route(
            route_name,
            seed=config.seed,
            obstacles=config.obstacles,
            obstacle_seed=config.seed + 1,
        )
        self.camera = config.camera
        self.rig = Rig(self.world, camera=self.camera)
        # Prime the firmware filters so the very first record/telemetry
        # carries real sensor values instead of zeros.
        self.rig.firmware.tick(
            0.0, 0.0, 0.0, self.world.battery_voltage, sonar_distance(self.world)
        )

        self.net: DrivingPolicy | None = None
        if config.weights:
            self.net = load_policy(
                config.weights, _arch_for_camera(self.camera), seed=config.seed
            )

        self.frame_id = 0
        self.latest_ctrl = Action(0.0, 0.0)
        self.command = "straight"
        self.logging = False
        self.noise = config.noise
        self.policy_active = config.mode == "policy"
        self.follow_state = FollowState() if config.mode == "follow" else None
        self._detections = sim_detections(camera=self.camera) if config.mode == "follow" else None

        self._noise_proc = NoiseProcess(
            NoiseSchedule(), np.random.default_rng([config.seed, 0xD17])
        )
        self._writer: SessionWriter | None = None
        self._session_count = 0
        self._log_t = 0.0
        self._frame: np.ndarray | None = None
        self.last_inference_ms: float | None = None
        self.last_predicted: Action | None = None
        self._applied = Action(0.0, 0.0)

    # ------------------------------------------------------------ messages

    def handle_message(self, msg: dict) -> dict | None:
        """Apply one client message; an err reply dict means it was refused."""
        errors = sorted(_CLIENT_VALIDATOR.iter_errors(msg), key=lambda e: e.path)
        if errors:
            return {"t": "err", "error": f"invalid message: {errors[0].message}"}
        kind = msg["t"]
        if kind == "ctrl":
            al = min(1.0, max(-1.0, float(msg["al"])))
            ar = min(1.0, max(-1.0, float(msg["ar"])))
            self.latest_ctrl = Action(al, ar)
            return None
        if kind == "cmd":
            self.command = msg["dir"]
            return None
        if kind == "toggle":
            what, on = msg["what"], bool(msg["on"])
            if what == "noise":
                self.noise = on
            elif what == "policy":
                if on and self.net is None:
                    return {"t": "err", "error": "no weights loaded"}
                self.policy_active = on
            elif what == "logging":
                if on and self._writer is None:
                    self._open_writer()
                elif not on and self._writer is not None:
                    self._writer.finalize(valid=True)
                    self._writer = None
            return None
        if kind == "telemetry":
            return self.telemetry()
        return {"t": "err", "error": f"unknown message type {kind!r}"}

    def _open_writer(self) -> None:
        parent = Path(self.config.out or "sessions")
        name = f"{self.config.mode}-s{self.config.seed:04d}-{self._session_count:02d}"
        meta = {
            "v": datakit.SCHEMA_VERSION,
            "route": self.route.name,
            "seed": self.config.seed,
            "minutes": None,
            "driver": "external",
            "noise": self._noise_proc.schedule.to_json() if self.noise else None,
            "obstacles": self.config.obstacles,
            "camera": asdict(self.camera),
            "control_hz": CONTROL_HZ,
            "sim_config_hash": sim_config_hash(self.world.body, self.camera),
        }
        self._writer = SessionWriter(parent / name, meta)
        self._session_count += 1
        self._log_t = 0.0

    # ------------------------------------------------------------ stepping

    def _decide(self) -> tuple[Action, Action]:
        """(label, applied) for this tick, before actuation noise."""
        if self.config.mode == "follow":
            dets = self._detections(self.world)
            self.follow_state = select_target(dets, self.follow_state)
            action = servo(self.follow_state)
            return action, action
        if self.policy_active and self.net is not None:
            image = self._frame.astype(np.float32) / 255.0
            onehot = command_onehot(self.command)[None, :]
            t0 = time.perf_counter()
            out = self.net.forward(image[None], onehot, train=False)
            self.last_inference_ms = (time.perf_counter() - t0) * 1000.0
            predicted = Action(float(out[0, 0]), float(out[0, 1]))
            self.last_predicted = predicted
            return predicted, predicted
        return self.latest_ctrl, self.latest_ctrl

    def tick(self, dt: float = CONTROL_DT) -> dict:
        """Advance one control period and return the telemetry message."""
        frame = render_camera(self.world, self.camera)
        self._frame = to_uint8(frame)

        label, applied = self._decide()
        if self.noise:
            applied = apply_steering_delta(applied, self._noise_proc.delta(self._log_t))

        if self._writer is not None:
            self._writer.add(
                self._frame,
                self._log_t,
                self.command,
                label,
                applied,
                self.rig.firmware.status(),
                noise_active=self.noise and self._noise_proc.active is not None,
            )

        self._applied = applied
        self.rig.drive(applied, dt)
        self.frame_id += 1
        self._log_t += dt
        return self.telemetry()

    # ------------------------------------------------------------ outputs

    def telemetry(self) -> dict:
        status = self.rig.firmware.status()
        predicted = self.last_predicted if self.policy_active else None
        return {
            "t": "telemetry",
            "frame": self.frame_id,
            "time": round(self.world.time, 3),
            "mode": self.config.mode,
            "pose": {
                "x": round(self.world.robot.x, 4),
                "y": round(self.world.robot.y, 4),
                "heading": round(self.world.robot.heading, 4),
            },
            "battery_mv": status.millivolts,
            "ticks": [status.ticks_left, status.ticks_right],
            "sonar_cm": status.sonar_cm,
            "collisions": self.world.collision_count,
            "applied": [round(self._applied.a_l, 4), round(self._applied.a_r, 4)],
            "command": self.command,
            "logging": self._writer is not None,
            "noise": self.noise,
            "policy": self.policy_active,
            "inference_ms": None
            if self.last_inference_ms is None or not self.policy_active
            else round(self.last_inference_ms, 3),
            "predicted": None
            if predicted is None
            else [round(predicted.a_l, 4), round(predicted.a_r, 4)],
        }

    def frame_png(self) -> bytes:
        """Current camera frame as 8-byte big-endian frame id + PNG bytes."""
        if self._frame is None:
            self._frame = to_uint8(render_camera(self.world, self.camera))
        buf = BytesIO()
        Image.fromarray(self._frame, mode="RGB").save(buf, format="PNG")
        return struct.pack(">Q", self.frame_id) + buf.getvalue()

    def close(self) -> None:
        if self._writer is not None:
            self._writer.finalize(valid=True)
            self._writer = None


# ---------------------------------------------------------------- batch modes

def run_collect(config: SessionConfig, minutes: float) -> Path:
    """Headless demonstration collection; identical to datakit.collect."""
    return datakit.collect(
        config.out or "sessions",
        config.route,
        minutes,
        noise=config.noise,
        obstacles=config.obstacles,
        seed=config.seed,
        camera=config.camera,
    )


# ---------------------------------------------------------------- service

def build_app(config: SessionConfig, session: BridgeSession | None = None):
    """FastAPI app hosting /ws, /health, and the UI static files."""
    if FastAPI is None:  # pragma: no cover
        raise RuntimeError("fastapi is not installed")
    session = session or BridgeSession(config)
    clients: list[WebSocket] = []
    controller: dict[str, WebSocket | None] = {"ws": None}

    async def _broadcast(text: str, blob: bytes) -> None:
        for ws in list(clients):
            try:
                await ws.send_text(text)
                await ws.send_bytes(blob)
            except Exception:
                with contextlib.suppress(ValueError):
                    clients.remove(ws)

    async def _loop() -> None:
        period = CONTROL_DT if config.realtime else 0.0
        next_due = time.monotonic()
        while True:
            if not clients:  # idle until someone is watching
                next_due = time.monotonic()
                await asyncio.sleep(0.02)
                continue
            telemetry = session.tick()
            await _broadcast(json.dumps(telemetry), session.frame_png())
            if period:
                next_due += period
                await asyncio.sleep(max(0.0, next_due - time.monotonic()))
            else:
                await asyncio.sleep(0.001)

    @contextlib.asynccontextmanager
    async def _lifespan(app: FastAPI):
        task = asyncio.create_task(_loop())
        try:
            yield
        finally:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task
            session.close()

    app = FastAPI(title="deskbot bridge", version=__version__, lifespan=_lifespan)

    @app.get("/health")
    async def health() -> JSONResponse:
        return JSONResponse(
            {"status": "ok", "version": __version__, "mode": config.mode}
        )

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        clients.append(ws)
        if controller["ws"] is None:
            controller["ws"] = ws
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps({"t": "err", "error": "not JSON"}))
                    continue
                if controller["ws"] is not ws and isinstance(msg, dict) and msg.get("t") != "telemetry":
                    await ws.send_text(
                        json.dumps({"t": "err", "error": "another client holds control"})
                    )
                    continue
                reply = session.handle_message(msg if isinstance(msg, dict) else {})
                if reply is not None:
                    await ws.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            with contextlib.suppress(ValueError):
                clients.remove(ws)
            if controller["ws"] is ws:
                controller["ws"] = clients[0] if clients else None

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():  # pragma: no cover - depends on built assets
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(config: SessionConfig) -> None:  # pragma: no cover - manual entry point
    """Run the websocket service until interrupted."""
    import uvicorn

    app = build_app(config)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
