"""Person following: detection gating, cross-frame tracking, visual servoing.

The controller keeps the tracked person horizontally centered and holds
distance by regulating the bounding-box height toward a setpoint. Detections
come from an abstract per-frame provider; the simulator's ground-truth
projector and a JSONL replay file both satisfy it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rig import Rig
from .simcore import (
    Action,
    CameraConfig,
    DEFAULT_CAMERA,
    Detection,
    DetectionNoise,
    WorldState,
    builtin_route,
    ground_truth_detections,
)

CONFIDENCE_GATE = 0.5
IOU_GATE = 0.3
CONTROL_DT = 0.05
BOX_RATE_LIMIT = 0.1  # max credited bbox motion, normalized units per frame


@dataclass
class FollowState:
    """Tracker state plus controller gains."""

    target: Detection | None = None
    age: int = 0  # frames since the target was last associated
    kp_steer: float = 1.2
    kp_throttle: float = 2.0
    target_height: float = 0.45  # normalized bbox-height setpoint
    lost_patience: int = 10  # frames a target survives without association
    box_rate: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


def _predicted_box(state: FollowState) -> Detection:
    """Coast the target forward to the current frame for association.

    Matching against the extrapolated box instead of the stale one keeps the
    IoU gate satisfied while the box sweeps across the image (the robot
    yawing quickly moves a narrow box by more than its own width per frame).
    """
    t = state.target
    steps = state.age + 1
    vx, vy, vw, vh = state.box_rate
    return Detection(
        cx=t.cx + vx * steps,
        cy=t.cy + vy * steps,
        w=max(t.w + vw * steps, 1e-6),
        h=max(t.h + vh * steps, 1e-6),
        confidence=t.confidence,
        kind=t.kind,
    )


def _clip_rate(value: float) -> float:
    return min(BOX_RATE_LIMIT, max(-BOX_RATE_LIMIT, value))


def select_target(detections: list[Detection], state: FollowState) -> FollowState:
    """Advance the tracker one frame; mutates and returns `state`.

    Candidates below the 50% confidence gate or of another class never become
    the target. An existing target is re-associated to the candidate with the
    highest IoU (>= 0.3) against its constant-velocity prediction; association
    beats confidence. After lost_patience frames without association the
    target is dropped and the best-confidence candidate, if any, is adopted
    fresh.
    """
    survivors = [d for d in detections if d.kind == "person" and d.confidence >= CONFIDENCE_GATE]

    if state.target is not None:
        predicted = _predicted_box(state)
        best = None
        best_iou = IOU_GATE
        for d in survivors:
            iou = predicted.iou(d)
            if iou >= best_iou:
                best = d
                best_iou = iou
        if best is not None:
            gap = state.age + 1
            old = state.target
            state.box_rate = (
                _clip_rate((best.cx - old.cx) / gap),
                _clip_rate((best.cy - old.cy) / gap),
                _clip_rate((best.w - old.w) / gap),
                _clip_rate((best.h - old.h) / gap),
            )
            state.target = best
            state.age = 0
            return state
        state.age += 1
        if state.age <= state.lost_patience:
            return state
        state.target = None
        state.age = 0

    if survivors:
        state.target = max(survivors, key=lambda d: d.confidence)
        state.age = 0
        state.box_rate = (0.0, 0.0, 0.0, 0.0)
    return state


def servo(state: FollowState) -> Action:
    """Proportional centering and distance keeping; (0, 0) with no target."""
    if state.target is None:
        return Action(0.0, 0.0)
    u = state.kp_steer * (state.target.cx - 0.5)  # > 0 steers right
    f = min(1.0, max(0.0, state.kp_throttle * (state.target_height - state.target.h)))
    return Action(f + u / 2.0, f - u / 2.0)


# ---------------------------------------------------------------- providers

def sim_detections(
    noise: DetectionNoise = DetectionNoise(), camera: CameraConfig = DEFAULT_CAMERA
):
    """Detection provider backed by the simulator's ground-truth projector."""

    def provider(world: WorldState) -> list[Detection]:
        return ground_truth_detections(world, noise, camera)

    return provider


def detections_to_jsonl(frames: list[list[Detection]], path: str | Path) -> None:
    """One line per frame: a JSON array of detection rows."""
    with open(path, "w") as fh:
        for dets in frames:
            row = [
                {"cx": d.cx, "cy": d.cy, "w": d.w, "h": d.h,
                 "confidence": d.confidence, "kind": d.kind}
                for d in dets
            ]
            fh.write(json.dumps(row) + "\n")


class ReplayDetections:
    """Detection provider that replays a JSONL file frame by frame."""

    def __init__(self, path: str | Path):
        self._frames: list[list[Detection]] = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                self._frames.append([Detection(**row) for row in json.loads(line)])
        self._cursor = 0

    def __call__(self, world: WorldState) -> list[Detection]:
        if self._cursor >= len(self._frames):
            return []
        dets = self._frames[self._cursor]
        self._cursor += 1
        return dets


# ---------------------------------------------------------------- episodes

@dataclass
class FollowResult:
    frames: int
    centering_rate: float  # fraction of frames with the target within 0.15 of center
    collisions: int
    person_laps: int
    trace: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "frames": self.frames,
            "centering_rate": self.centering_rate,
            "collisions": self.collisions,
            "person_laps": self.person_laps,
        }


CENTERING_BAND = 0.15


def follow_episode(
    world: WorldState | None = None,
    detsource=None,
    duration: float = 60.0,
    seed: int = 0,
    state: FollowState | None = None,
    keep_trace: bool = True,
) -> FollowResult:
    """Closed-loop following run; defaults to the built-in circuit world."""
    if world is None:
        world, _ = builtin_route("LOOP", seed=seed)
    detsource = detsource or sim_detections()
    state = state or FollowState()
    rig = Rig(world)

    person = next((e for e in world.entities if e.kind == "person"), None)
    laps = 0
    last_wp = person._wp_index if person else 0

    n = int(round(duration / CONTROL_DT))
    centered = 0
    collisions0 = world.collision_count
    trace: list[dict] = []
    for k in range(n):
        dets = detsource(world)
        state = select_target(dets, state)
        action = servo(state)
        if state.target is not None and abs(state.target.cx - 0.5) < CENTERING_BAND:
            centered += 1
        if keep_trace:
            trace.append(
                {
                    "t": round(k * CONTROL_DT, 3),
                    "cx": None if state.target is None else state.target.cx,
                    "h": None if state.target is None else state.target.h,
                    "a_l": action.a_l,
                    "a_r": action.a_r,
                }
            )
        rig.drive(action, CONTROL_DT)
        if person is not None:
            if person._wp_index == 1 and last_wp == len(person.waypoints) - 1:
                laps += 1  # wrapped past the closing waypoint
            last_wp = person._wp_index
    return FollowResult(
        frames=n,
        centering_rate=centered / n if n else 0.0,
        collisions=world.collision_count - collisions0,
        person_laps=laps,
        trace=trace,
    )
