"""Scripted driver: pure pursuit along a segment polyline.

Produces the (action, command) pairs used both for demonstration logging and
as the corrective teacher during noise-injected collection. Steering sign
follows the body convention: a_l > a_r turns right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .routes import Segment
from .types import Action
from .world import WorldState

COMMANDS = ("left", "straight", "right")
COMMAND_INDEX = {name: i for i, name in enumerate(COMMANDS)}


def command_onehot(name: str) -> np.ndarray:
    vec = np.zeros(3, dtype=np.float32)
    vec[COMMAND_INDEX[name]] = 1.0
    return vec


@dataclass
class ExpertParams:
    lookahead: float = 0.7  # m along the path
    cruise: float = 0.55  # throttle on straights
    min_throttle: float = 0.30
    command_radius: float = 3.0  # maneuver command active this far before the box
    dodge_span: float = 1.4  # m of arc length over which a dodge ramps in and out
    dodge_clearance: float = 0.52  # m center-to-center lateral clearance
    dodge_slow: float = 0.7  # throttle factor while a dodge is active
    pivot_steer: float = 0.3  # wheel differential while re-acquiring a target behind us


def project_onto_polyline(polyline: np.ndarray, x: float, y: float) -> tuple[float, float]:
    """(arc position, signed lateral offset) of the nearest path point.

    Lateral is positive to the left of the travel direction.
    """
    best_d2 = math.inf
    best_s = 0.0
    best_lat = 0.0
    s_base = 0.0
    p = np.array([x, y])
    for i in range(len(polyline) - 1):
        a = polyline[i]
        b = polyline[i + 1]
        ab = b - a
        leg = float(np.linalg.norm(ab))
        if leg < 1e-12:
            continue
        t = float(np.dot(p - a, ab)) / (leg * leg)
        t = min(1.0, max(0.0, t))
        q = a + ab * t
        d2 = float(np.dot(p - q, p - q))
        if d2 < best_d2 - 1e-12:
            best_d2 = d2
            best_s = s_base + t * leg
            # Left-of-direction is positive.
            best_lat = float((ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0])) / leg)
        s_base += leg
    return best_s, best_lat


def point_along(polyline: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Point and unit direction at arc position s, clamped to the path."""
    if s <= 0.0:
        d = polyline[1] - polyline[0]
        return polyline[0].copy(), d / np.linalg.norm(d)
    remaining = s
    for i in range(len(polyline) - 1):
        a = polyline[i]
        b = polyline[i + 1]
        leg = float(np.linalg.norm(b - a))
        if leg < 1e-12:
            continue
        if remaining <= leg:
            d = (b - a) / leg
            return a + d * remaining, d
        remaining -= leg
    d = polyline[-1] - polyline[-2]
    return polyline[-1].copy(), d / np.linalg.norm(d)


def path_length(polyline: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(polyline, axis=0), axis=1).sum())


def active_command(segment: Segment, s: float, params: ExpertParams | None = None) -> str:
    """Maneuver command near and inside the box, straight elsewhere."""
    params = params or ExpertParams()
    legs = np.linalg.norm(np.diff(segment.polyline, axis=0), axis=1)
    s_entry = float(legs[0])
    s_exit = float(legs[: len(legs) - 1].sum())
    if s_entry - params.command_radius <= s <= s_exit:
        return segment.maneuver
    return "straight"


def _dodge_offset(
    world: WorldState, segment: Segment, at_s: float, params: ExpertParams
) -> tuple[float, bool]:
    """Lateral path offset at arc position at_s that clears nearby obstacles.

    The offset ramps linearly in over half the dodge span, holds the full
    clearance while passing, and ramps back out, so the pursuit target moves
    smoothly instead of jumping when an obstacle enters range.
    """
    best_w = 0.0
    desired = 0.0
    for e in world.entities:
        if e.kind != "obstacle":
            continue
        s_o, lat_o = project_onto_polyline(segment.polyline, e.x, e.y)
        if abs(lat_o) >= 0.6:
            continue
        w = 1.0 - abs(at_s - s_o) / params.dodge_span
        if w <= 0.0 or w <= best_w:
            continue
        side = -1.0 if lat_o >= 0.0 else 1.0
        best_w = w
        desired = lat_o + side * params.dodge_clearance
    if best_w <= 0.0:
        return 0.0, False
    return desired * min(1.0, 2.0 * best_w), True


def _escape_action(world: WorldState) -> Action | None:
    """Hard turn away from an obstacle the body is pressed against.

    Freeze-on-contact physics can trap a forward-only controller whose
    target bearing passes through the obstacle; breaking the symmetry with
    a committed one-sided arc frees it.
    """
    c = math.cos(world.robot.heading)
    sn = math.sin(world.robot.heading)
    for e in world.entities:
        if e.kind != "obstacle":
            continue
        dx = e.x - world.robot.x
        dy = e.y - world.robot.y
        gap = math.hypot(dx, dy) - e.radius - world.body.footprint_radius
        if gap > 0.06:
            continue
        fx = dx * c + dy * sn
        if fx <= 0.0:
            continue  # behind the body; driving forward already clears it
        ly = -dx * sn + dy * c
        if ly >= 0.0:  # obstacle on the left: arc away rightward
            return Action(0.45, 0.02)
        return Action(0.02, 0.45)
    return None


def scripted_expert(
    world: WorldState, segment: Segment, params: ExpertParams | None = None
) -> tuple[Action, np.ndarray]:
    """One control decision: wheel action plus the current one-hot command."""
    params = params or ExpertParams()
    s, _ = project_onto_polyline(segment.polyline, world.robot.x, world.robot.y)
    command = active_command(segment, s, params)

    escape = _escape_action(world)
    if escape is not None:
        return escape, command_onehot(command)

    target_s = s + params.lookahead
    target, path_dir = point_along(segment.polyline, target_s)
    offset, dodging = _dodge_offset(world, segment, target_s, params)
    if offset != 0.0:
        normal = np.array([-path_dir[1], path_dir[0]])  # left of travel
        target = target + normal * offset

    dx = float(target[0]) - world.robot.x
    dy = float(target[1]) - world.robot.y
    c = math.cos(world.robot.heading)
    sn = math.sin(world.robot.heading)
    fx = dx * c + dy * sn
    ly = -dx * sn + dy * c
    dist = math.hypot(fx, ly)

    if dist < 0.05:
        return Action(0.0, 0.0), command_onehot(command)

    alpha = math.atan2(ly, fx)
    if abs(alpha) > math.pi / 2.0:
        # Target behind us (e.g. after a noise shove): pure pursuit loses
        # authority as sin(alpha) shrinks, so spin back toward it instead.
        half = params.pivot_steer / 2.0
        base = max(params.min_throttle, half)
        turn = half if alpha > 0.0 else -half
        return Action(base - turn, base + turn), command_onehot(command)
    # Far off the path the lookahead target is much more than one lookahead
    # away; clamping the pursuit distance keeps the corrective arc tight.
    dist = min(dist, params.lookahead)
    curvature = 2.0 * math.sin(alpha) / dist
    throttle = params.cruise * max(
        params.min_throttle / params.cruise, 1.0 - 0.55 * abs(alpha) / (math.pi / 2)
    )
    if dodging:
        throttle *= params.dodge_slow
    # s = a_l - a_r maps to omega = -s * max_speed / track; invert for the
    # differential that yields omega = v * curvature.
    diff = -curvature * world.body.track_width * throttle
    a_l = throttle + diff / 2.0
    a_r = throttle - diff / 2.0
    a_l = min(1.0, max(0.0, a_l))
    a_r = min(1.0, max(0.0, a_r))
    return Action(a_l, a_r), command_onehot(command)
