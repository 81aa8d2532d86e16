"""Bridge session semantics, protocol schema conformance, and the service."""

from __future__ import annotations

import json
import struct
from io import BytesIO

import jsonschema
import numpy as np
import pytest
from PIL import Image

from deskbot import datakit
from deskbot.bridge import (
    BridgeSession,
    SessionConfig,
    build_app,
    load_protocol_schema,
    run_collect,
)
from deskbot.simcore import CameraConfig

CAM = CameraConfig(width=64, height=24)

SCHEMA = load_protocol_schema()


def telemetry_validator() -> jsonschema.Draft202012Validator:
    return jsonschema.Draft202012Validator(
        {"$defs": SCHEMA["$defs"], "$ref": "#/$defs/telemetry"}
    )


def make_session(**overrides) -> BridgeSession:
    kwargs = dict(mode="teleop", route="R1", seed=0, camera=CAM, realtime=False)
    kwargs.update(overrides)
    return BridgeSession(SessionConfig(**kwargs))


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        SessionConfig(mode="warp")
    with pytest.raises(ValueError, match="port"):
        SessionConfig(port=80)
    with pytest.raises(ValueError, match="weights"):
        SessionConfig(mode="policy")


def test_batch_modes_are_not_interactive():
    with pytest.raises(ValueError, match="interactive"):
        BridgeSession(SessionConfig(mode="collect"))


# ---------------------------------------------------------------- messages


def test_ctrl_message_updates_and_clamps():
    s = make_session()
    assert s.handle_message({"t": "ctrl", "al": 0.5, "ar": -0.25}) is None
    assert (s.latest_ctrl.a_l, s.latest_ctrl.a_r) == (0.5, -0.25)
    s.handle_message({"t": "ctrl", "al": 7.0, "ar": -7.0})
    assert (s.latest_ctrl.a_l, s.latest_ctrl.a_r) == (1.0, -1.0)


def test_cmd_message_sets_direction():
    s = make_session()
    s.handle_message({"t": "cmd", "dir": "left"})
    assert s.command == "left"


def test_invalid_messages_are_refused():
    s = make_session()
    for bad in [
        {"t": "ctrl", "al": 0.5},  # missing ar
        {"t": "ctrl", "al": "fast", "ar": 0.0},
        {"t": "cmd", "dir": "backward"},
        {"t": "toggle", "what": "turbo", "on": True},
        {"t": "warp"},
        {},
    ]:
        reply = s.handle_message(bad)
        assert reply is not None and reply["t"] == "err", bad
    # Refused messages change nothing.
    assert s.latest_ctrl.a_l == 0.0 and s.command == "straight"


def test_policy_toggle_without_weights_errors():
    s = make_session()
    reply = s.handle_message({"t": "toggle", "what": "policy", "on": True})
    assert reply["t"] == "err"
    assert not s.policy_active


def test_noise_toggle():
    s = make_session()
    assert not s.noise
    s.handle_message({"t": "toggle", "what": "noise", "on": True})
    assert s.noise
    s.handle_message({"t": "toggle", "what": "noise", "on": False})
    assert not s.noise


# ------------------------------------------------------------ tick/telemetry


def test_telemetry_conforms_to_schema():
    v = telemetry_validator()
    s = make_session()
    v.validate(s.telemetry())
    s.handle_message({"t": "ctrl", "al": 0.8, "ar": 0.6})
    for _ in range(10):
        v.validate(s.tick())


def test_teleop_motion_follows_ctrl():
    s = make_session()
    x0, y0 = s.world.robot.x, s.world.robot.y
    s.handle_message({"t": "ctrl", "al": 1.0, "ar": 1.0})
    for _ in range(40):
        s.tick()
    moved = np.hypot(s.world.robot.x - x0, s.world.robot.y - y0)
    assert moved > 0.5  # drove ~2 s at full throttle


def test_frame_png_layout():
    s = make_session()
    s.tick()
    blob = s.frame_png()
    (frame_id,) = struct.unpack(">Q", blob[:8])
    assert frame_id == s.frame_id
    img = Image.open(BytesIO(blob[8:]))
    assert img.size == (64, 24)
    arr = np.asarray(img)
    assert arr.shape == (24, 64, 3)


def test_follow_mode_emits_servo_actions():
    s = make_session(mode="follow")
    v = telemetry_validator()
    t = None
    for _ in range(20):
        t = s.tick()
        v.validate(t)
    assert t["mode"] == "follow"
    assert s.follow_state.target is not None  # locked onto the walker
    assert tuple(t["applied"]) != (0.0, 0.0)


# ----------------------------------------------------------------- logging


def test_logging_toggle_produces_loadable_session(tmp_path):
    s = make_session(out=str(tmp_path))
    s.handle_message({"t": "ctrl", "al": 0.9, "ar": 0.85})
    s.handle_message({"t": "toggle", "what": "logging", "on": True})
    for _ in range(30):
        s.tick()
    s.handle_message({"t": "toggle", "what": "logging", "on": False})
    (session_dir,) = tmp_path.iterdir()
    assert session_dir.name == "teleop-s0000-00"
    session = datakit.load_session(session_dir)
    assert len(session.records) == 30
    assert session.meta["driver"] == "external"
    assert all(r.applied_action == r.label_action for r in session.records)
    ds = datakit.dataset_from_sessions([session])
    assert ds.images.shape == (30, 24, 64, 3)


def test_logging_with_noise_marks_frames(tmp_path):
    s = make_session(out=str(tmp_path), noise=True)
    s.handle_message({"t": "ctrl", "al": 0.7, "ar": 0.7})
    s.handle_message({"t": "toggle", "what": "logging", "on": True})
    for _ in range(400):  # 20 s; the first noise episode lands well within
        s.tick()
    s.handle_message({"t": "toggle", "what": "logging", "on": False})
    (session_dir,) = tmp_path.iterdir()
    session = datakit.load_session(session_dir)
    flagged = [r for r in session.records if r.noise_active]
    assert flagged
    assert any(r.applied_action != r.label_action for r in flagged)


def test_two_logging_sessions_get_distinct_names(tmp_path):
    s = make_session(out=str(tmp_path))
    for _ in range(2):
        s.handle_message({"t": "toggle", "what": "logging", "on": True})
        s.tick()
        s.handle_message({"t": "toggle", "what": "logging", "on": False})
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["teleop-s0000-00", "teleop-s0000-01"]


def test_close_finalizes_open_writer(tmp_path):
    s = make_session(out=str(tmp_path))
    s.handle_message({"t": "toggle", "what": "logging", "on": True})
    s.tick()
    s.close()
    (session_dir,) = tmp_path.iterdir()
    assert datakit.load_session(session_dir).meta["valid"] is True


# ------------------------------------------------------------- batch collect


def test_run_collect_delegates_to_datakit(tmp_path):
    cfg = SessionConfig(mode="collect", route="R2", seed=6, out=str(tmp_path), camera=CAM)
    d = run_collect(cfg, minutes=0.05)
    assert d.name == "r2-s0006"
    reference = datakit.collect(
        tmp_path / "ref", "R2", 0.05, noise=False, obstacles=False, seed=6, camera=CAM
    )
    assert (d / "manifest.jsonl").read_bytes() == (reference / "manifest.jsonl").read_bytes()


# ----------------------------------------------------------------- service


@pytest.fixture()
def client_app(tmp_path):
    from fastapi.testclient import TestClient

    cfg = SessionConfig(
        mode="teleop", route="R1", seed=0, camera=CAM, out=str(tmp_path), realtime=False
    )
    session = BridgeSession(cfg)
    app = build_app(cfg, session=session)
    with TestClient(app) as client:
        yield client, session


def test_health_endpoint(client_app):
    client, _ = client_app
    doc = client.get("/health").json()
    assert doc["status"] == "ok" and doc["mode"] == "teleop"


def test_ws_streams_schema_valid_telemetry_and_frames(client_app):
    client, _ = client_app
    v = telemetry_validator()
    with client.websocket_connect("/ws") as ws:
        for _ in range(3):
            msg = json.loads(ws.receive_text())
            v.validate(msg)
            blob = ws.receive_bytes()
            assert struct.unpack(">Q", blob[:8])[0] >= 0
            Image.open(BytesIO(blob[8:])).verify()


def test_ws_rejects_non_json(client_app):
    client, _ = client_app

    def next_text(ws):
        while True:
            data = ws.receive()
            if "text" in data:
                return json.loads(data["text"])

    with client.websocket_connect("/ws") as ws:
        ws.send_text("{not json")
        while True:
            msg = next_text(ws)
            if msg["t"] == "err":
                assert "JSON" in msg["error"]
                break


def test_second_client_cannot_drive(client_app):
    client, session = client_app
    with client.websocket_connect("/ws") as first:
        with client.websocket_connect("/ws") as second:
            second.send_text(json.dumps({"t": "ctrl", "al": 1.0, "ar": 1.0}))
            while True:
                data = second.receive()
                if "text" in data:
                    msg = json.loads(data["text"])
                    if msg["t"] == "err":
                        assert "control" in msg["error"]
                        break
            assert session.latest_ctrl.a_l == 0.0
            first.send_text(json.dumps({"t": "ctrl", "al": 0.5, "ar": 0.5}))
            while session.latest_ctrl.a_l != 0.5:
                first.receive()
