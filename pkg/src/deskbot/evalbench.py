"""Closed-loop driving benchmark: segment protocol, metrics, and reports.

A route is evaluated segment by segment. The robot is reset to the segment's
start marker, the policy drives at the control rate, and progress is scored
as monotone arc-length along the segment's two counted 5 m legs. A segment
ends on goal entry (success, 10 m), wrong-branch entry (5 m exactly), a
wedged robot, a policy error, or a 60 s timeout. Collisions are logged as
contact onsets and driving continues while the robot still moves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .rig import Rig
from .simcore import (
    Action,
    BodyParams,
    CameraConfig,
    DEFAULT_CAMERA,
    ExpertParams,
    Segment,
    WorldState,
    active_command,
    builtin_route,
    command_onehot,
    project_onto_polyline,
    render_camera,
    scripted_expert,
)

CONTROL_DT = 0.05
SEGMENT_TIMEOUT = 60.0
WEDGE_SPEED = 0.02  # m/s; below this after contact the robot counts as stuck
WEDGE_PATIENCE = 3.0  # s of continuous sub-threshold speed before giving up
SEGMENT_LENGTH_M = 10.0
MISSED_INTERSECTION_M = 5.0
REPORT_VERSION = 1


@dataclass
class Observation:
    """Everything a driving policy may look at for one control decision."""

    image: np.ndarray  # (H, W, 3) uint8 camera frame
    command: str  # "left" | "straight" | "right"
    world: WorldState
    segment: Segment


Policy = Callable[[Observation], Action]


def expert_policy(params: ExpertParams | None = None) -> Policy:
    """The scripted route follower wrapped as a benchmark policy."""

    def drive(obs: Observation) -> Action:
        action, _ = scripted_expert(obs.world, obs.segment, params)
        return action

    return drive


def constant_policy(a_l: float, a_r: float) -> Policy:
    def drive(obs: Observation) -> Action:
        return Action(a_l, a_r)

    return drive


def network_policy(net) -> Policy:
    """Wrap a trained driving network; consumes only image + command."""

    def drive(obs: Observation) -> Action:
        image = obs.image.astype(np.float32) / 255.0
        command = command_onehot(obs.command)[None, :]
        out = net.forward(image[None], command, train=False)
        return Action(float(out[0, 0]), float(out[0, 1]))

    return drive


# ---------------------------------------------------------------- results

@dataclass
class SegmentResult:
    name: str
    maneuver: str
    distance_m: float  # in [0, 10]
    success: bool
    collisions: int
    outcome: str  # goal | wrong_branch | timeout | wedged | error
    mean_inference_ms: float | None = None


def _pct(fraction: float) -> int:
    return int(math.floor(fraction * 100.0 + 0.5))


@dataclass
class TrialResult:
    seed: int
    route: str
    segments: list[SegmentResult]

    @property
    def distance_pct(self) -> int:
        return _pct(
            float(np.mean([r.distance_m / SEGMENT_LENGTH_M for r in self.segments]))
        )

    @property
    def success_pct(self) -> int:
        return _pct(float(np.mean([1.0 if r.success else 0.0 for r in self.segments])))

    @property
    def collisions(self) -> int:
        return sum(r.collisions for r in self.segments)

    @property
    def mean_inference_ms(self) -> float | None:
        timed = [r.mean_inference_ms for r in self.segments if r.mean_inference_ms is not None]
        if not timed:
            return None
        return float(np.mean(timed))

    @property
    def fps(self) -> float | None:
        ms = self.mean_inference_ms
        if ms is None or ms <= 0.0:
            return None
        return 1000.0 / ms


@dataclass
class BenchmarkResult:
    route: str
    label: str
    trials: list[TrialResult]
    param_count: int | None = None

    def _series(self, values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=float)
        return float(arr.mean()), float(arr.std())

    @property
    def distance(self) -> tuple[float, float]:
        return self._series([t.distance_pct for t in self.trials])

    @property
    def success(self) -> tuple[float, float]:
        return self._series([t.success_pct for t in self.trials])

    @property
    def collision_counts(self) -> tuple[float, float]:
        return self._series([t.collisions for t in self.trials])

    @property
    def fps(self) -> tuple[float, float] | None:
        per_trial = [t.fps for t in self.trials]
        if any(f is None for f in per_trial):
            return None
        return self._series(per_trial)  # type: ignore[arg-type]


# ---------------------------------------------------------------- protocol

def _counted_arc_table(segment: Segment) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (full, counted) arc length at each polyline vertex."""
    deltas = np.linalg.norm(np.diff(segment.polyline, axis=0), axis=1)
    cum_full = np.concatenate([[0.0], np.cumsum(deltas)])
    counted_deltas = np.where(segment.counted, deltas, 0.0)
    cum_counted = np.concatenate([[0.0], np.cumsum(counted_deltas)])
    return cum_full, cum_counted


def _counted_distance(cum_full: np.ndarray, cum_counted: np.ndarray, s: float) -> float:
    """Map an arc position on the polyline to counted meters."""
    if s <= 0.0:
        return 0.0
    if s >= cum_full[-1]:
        return float(cum_counted[-1])
    i = int(np.searchsorted(cum_full, s, side="right")) - 1
    span = cum_full[i + 1] - cum_full[i]
    frac = (s - cum_full[i]) / span if span > 0.0 else 0.0
    return float(cum_counted[i] + frac * (cum_counted[i + 1] - cum_counted[i]))


def _in_box(segment: Segment, x: float, y: float) -> bool:
    cx, cy = segment.box_center
    return abs(x - cx) <= segment.box_half and abs(y - cy) <= segment.box_half


def run_segment(
    world: WorldState,
    policy: Policy,
    segment: Segment,
    camera: CameraConfig = DEFAULT_CAMERA,
    timeout: float = SEGMENT_TIMEOUT,
    timer: Callable[[], float] | None = None,
) -> SegmentResult:
    """Drive one segment closed-loop and score it.

    The wrong-branch zones arm only once the robot has entered the
    intersection box, so driving the approach leg (which passes its own
    arm's zone) cannot trip them.
    """
    world.robot.x, world.robot.y = segment.start.x, segment.start.y
    world.robot.heading = segment.start.heading
    world.v_l = world.v_r = 0.0
    world.collided = False
    rig = Rig(world, camera=camera)

    cum_full, cum_counted = _counted_arc_table(segment)
    distance = 0.0
    collisions = 0
    success = False
    outcome = "timeout"
    armed = False
    was_colliding = False
    stuck_time = 0.0
    contact_seen = False
    inference_s: list[float] = []

    steps = int(round(timeout / CONTROL_DT))
    for k in range(steps):
        frame = render_camera(world, camera)
        image = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        s, _ = project_onto_polyline(segment.polyline, world.robot.x, world.robot.y)
        obs = Observation(
            image=image,
            command=active_command(segment, s),
            world=world,
            segment=segment,
        )
        try:
            if timer is not None:
                t0 = timer()
                action = policy(obs)
                inference_s.append(timer() - t0)
            else:
                action = policy(obs)
        except Exception:
            outcome = "error"
            break

        px, py = world.robot.x, world.robot.y
        rig.drive(action, CONTROL_DT)
        travel_speed = math.hypot(world.robot.x - px, world.robot.y - py) / CONTROL_DT

        s, _ = project_onto_polyline(segment.polyline, world.robot.x, world.robot.y)
        distance = min(
            SEGMENT_LENGTH_M,
            max(distance, _counted_distance(cum_full, cum_counted, s)),
        )

        if world.collided and not was_colliding:
            collisions += 1
            contact_seen = True
        was_colliding = world.collided

        if contact_seen and travel_speed < WEDGE_SPEED:
            stuck_time += CONTROL_DT
            if stuck_time >= WEDGE_PATIENCE:
                outcome = "wedged"
                break
        else:
            stuck_time = 0.0

        x, y = world.robot.x, world.robot.y
        if not armed and _in_box(segment, x, y):
            armed = True

        gx, gy, gr = segment.goal
        if math.hypot(x - gx, y - gy) < gr:
            success = True
            distance = SEGMENT_LENGTH_M
            outcome = "goal"
            break

        if armed and any(
            math.hypot(x - zx, y - zy) < zr for zx, zy, zr in segment.wrong_zones
        ):
            distance = MISSED_INTERSECTION_M
            outcome = "wrong_branch"
            break

    mean_ms = float(np.mean(inference_s) * 1000.0) if inference_s else None
    return SegmentResult(
        name=segment.name,
        maneuver=segment.maneuver,
        distance_m=distance,
        success=success,
        collisions=collisions,
        outcome=outcome,
        mean_inference_ms=mean_ms,
    )


def run_trial(
    policy: Policy,
    route: str,
    seed: int,
    camera: CameraConfig = DEFAULT_CAMERA,
    obstacles: bool = False,
    timeout: float = SEGMENT_TIMEOUT,
    timer: Callable[[], float] | None = None,
    body: BodyParams | None = None,
) -> TrialResult:
    """Run every segment of a route once with a per-trial world seed."""
    world, spec = builtin_route(
        route, seed=seed, body=body, obstacles=obstacles, obstacle_seed=seed + 1
    )
    results = [
        run_segment(world, policy, seg, camera=camera, timeout=timeout, timer=timer)
        for seg in spec.segments
    ]
    return TrialResult(seed=seed, route=spec.name, segments=results)


def run_benchmark(
    policy: Policy,
    route: str = "EVAL1",
    trials: int = 3,
    base_seed: int = 0,
    label: str = "policy",
    camera: CameraConfig = DEFAULT_CAMERA,
    obstacles: bool = False,
    timeout: float = SEGMENT_TIMEOUT,
    timer: Callable[[], float] | None = None,
    param_count: int | None = None,
    body: BodyParams | None = None,
) -> BenchmarkResult:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    runs = [
        run_trial(
            policy,
            route,
            seed=base_seed + t,
            camera=camera,
            obstacles=obstacles,
            timeout=timeout,
            timer=timer,
            body=body,
        )
        for t in range(trials)
    ]
    return BenchmarkResult(route=route, label=label, trials=runs, param_count=param_count)


# ---------------------------------------------------------------- reports

def _fmt_params(n: int | None) -> str:
    if n is None:
        return "n/a"
    return f"{n / 1e6:.1f}M"


def _fmt_fps(stats: tuple[float, float] | None) -> str:
    if stats is None:
        return "n/a"
    mean, std = stats
    return f"{mean:.0f}±{std:.0f}"


def render_report_md(result: BenchmarkResult) -> str:
    dm, ds = result.distance
    sm, ss = result.success
    cm, cs = result.collision_counts
    lines = [
        f"# Driving benchmark — {result.route}",
        "",
        f"Trials: {len(result.trials)} (seeds "
        + ", ".join(str(t.seed) for t in result.trials)
        + ")",
        "",
        "| Policy | Distance ↑ | Success ↑ | Collisions ↓ | FPS ↑ | Params ↓ |",
        "|---|---|---|---|---|---|",
        f"| {result.label} | {dm:.0f}±{ds:.0f}% | {sm:.0f}±{ss:.0f}% "
        f"| {cm:.1f}±{cs:.1f} | {_fmt_fps(result.fps)} | {_fmt_params(result.param_count)} |",
        "",
    ]
    for trial in result.trials:
        lines.append(f"## Trial seed {trial.seed}")
        lines.append("")
        lines.append(
            f"distance {trial.distance_pct}%, success {trial.success_pct}%, "
            f"collisions {trial.collisions}"
        )
        lines.append("")
        lines.append("| Segment | Maneuver | Distance (m) | Success | Collisions | Outcome |")
        lines.append("|---|---|---|---|---|---|")
        for seg in trial.segments:
            lines.append(
                f"| {seg.name} | {seg.maneuver} | {seg.distance_m:.3f} "
                f"| {'yes' if seg.success else 'no'} | {seg.collisions} | {seg.outcome} |"
            )
        lines.append("")
    return "\n".join(lines)


def report_to_json(result: BenchmarkResult) -> dict:
    dm, ds = result.distance
    sm, ss = result.success
    cm, cs = result.collision_counts
    fps = result.fps
    return {
        "v": REPORT_VERSION,
        "route": result.route,
        "label": result.label,
        "param_count": result.param_count,
        "aggregate": {
            "distance_pct_mean": round(dm, 3),
            "distance_pct_std": round(ds, 3),
            "success_pct_mean": round(sm, 3),
            "success_pct_std": round(ss, 3),
            "collisions_mean": round(cm, 3),
            "collisions_std": round(cs, 3),
            "fps_mean": None if fps is None else round(fps[0], 3),
            "fps_std": None if fps is None else round(fps[1], 3),
        },
        "trials": [
            {
                "seed": t.seed,
                "distance_pct": t.distance_pct,
                "success_pct": t.success_pct,
                "collisions": t.collisions,
                "mean_inference_ms": None
                if t.mean_inference_ms is None
                else round(t.mean_inference_ms, 3),
                "segments": [
                    {
                        "name": seg.name,
                        "maneuver": seg.maneuver,
                        "distance_m": round(seg.distance_m, 3),
                        "success": seg.success,
                        "collisions": seg.collisions,
                        "outcome": seg.outcome,
                        "mean_inference_ms": None
                        if seg.mean_inference_ms is None
                        else round(seg.mean_inference_ms, 3),
                    }
                    for seg in t.segments
                ],
            }
            for t in result.trials
        ],
    }


def report(result: BenchmarkResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.md and report.json; bytes depend only on `result`."""
    if not result.trials:
        raise ValueError("cannot report an empty benchmark")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    md_path = out / "report.md"
    json_path = out / "report.json"
    md_path.write_text(render_report_md(result))
    json_path.write_text(json.dumps(report_to_json(result), indent=2) + "\n")
    return md_path, json_path
