"""Corridor worlds and driving routes.

A route is a list of independent segments. Each segment is one pass through
an intersection: a 5 m approach leg, an uncounted traversal of the
intersection box, and a 5 m exit leg, so the scored path length is always
10 m. Worlds are built by carving 1.5 m corridors out of a solid wall grid
and painting wall cells with texture ids in 0.4 m blocks so every corridor
face has distinctive local texture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import BodyParams, Entity, Pose
from .world import WorldState, disc_hits_grid, make_world

CORRIDOR_WIDTH = 1.5  # m
LEG_LENGTH = 5.0  # m of counted path on each side of the intersection
GOAL_RADIUS = 0.5  # m
WRONG_ZONE_RADIUS = 0.55  # m
ARC_POINTS = 9  # samples across a quarter-turn inside the intersection

_DIRS = {
    "N": np.array([0.0, 1.0]),
    "S": np.array([0.0, -1.0]),
    "E": np.array([1.0, 0.0]),
    "W": np.array([-1.0, 0.0]),
}


@dataclass
class Segment:
    name: str
    maneuver: str  # "left" | "right" | "straight"
    start: Pose
    polyline: np.ndarray  # (N, 2) waypoints, start to goal
    counted: np.ndarray  # (N-1,) bool, which legs score distance
    goal: tuple[float, float, float]  # x, y, radius
    wrong_zones: list[tuple[float, float, float]] = field(default_factory=list)
    box_center: tuple[float, float] = (0.0, 0.0)
    box_half: float = CORRIDOR_WIDTH / 2

    @property
    def counted_length(self) -> float:
        legs = np.linalg.norm(np.diff(self.polyline, axis=0), axis=1)
        return float(legs[self.counted].sum())

    def in_box(self, x: float, y: float) -> bool:
        return (
            abs(x - self.box_center[0]) <= self.box_half
            and abs(y - self.box_center[1]) <= self.box_half
        )


@dataclass
class RouteSpec:
    name: str
    segments: list[Segment]

    def maneuver_counts(self) -> dict[str, int]:
        counts = {"left": 0, "right": 0, "straight": 0}
        for s in self.segments:
            counts[s.maneuver] += 1
        return counts


# ---------------------------------------------------------------- grid carving

class GridBuilder:
    def __init__(self, width_m: float, height_m: float, resolution: float = 0.05,
                 corridor_width: float = CORRIDOR_WIDTH, texture_seed: int = 0):
        self.resolution = resolution
        self.cols = int(round(width_m / resolution))
        self.rows = int(round(height_m / resolution))
        self.corridor_width = corridor_width
        self.texture_seed = texture_seed
        self._free = np.zeros((self.rows, self.cols), dtype=bool)

    def carve(self, x0: float, y0: float, x1: float, y1: float) -> "GridBuilder":
        """Open a corridor along an axis-aligned centerline segment.

        The carved region is the centerline dilated by half the corridor
        width in both axes, so corridors meeting at a point form a clean
        junction box.
        """
        half = self.corridor_width / 2.0
        xa, xb = min(x0, x1) - half, max(x0, x1) + half
        ya, yb = min(y0, y1) - half, max(y0, y1) + half
        c0 = max(0, int(round(xa / self.resolution)))
        c1 = min(self.cols, int(round(xb / self.resolution)))
        r0 = max(0, int(round(ya / self.resolution)))
        r1 = min(self.rows, int(round(yb / self.resolution)))
        self._free[r0:r1, c0:c1] = True
        return self

    def build(self) -> np.ndarray:
        # Texture ids in 8x8-cell blocks from a small integer hash.
        bx = (np.arange(self.cols) // 8)[None, :]
        by = (np.arange(self.rows) // 8)[:, None]
        h = (bx * 73856093) ^ (by * 19349663) ^ (self.texture_seed * 83492791)
        tex = (h % 12 + 1).astype(np.uint8)
        grid = np.where(self._free, np.uint8(0), tex)
        # Hard border: outermost cells are always wall.
        grid[0, :] = tex[0, :]
        grid[-1, :] = tex[-1, :]
        grid[:, 0] = tex[:, 0]
        grid[:, -1] = tex[:, -1]
        return grid


# ---------------------------------------------------------------- segments

def _maneuver_of(u: np.ndarray, e: np.ndarray) -> str:
    cross = u[0] * e[1] - u[1] * e[0]
    if abs(cross) < 1e-9:
        return "straight"
    return "left" if cross > 0 else "right"


def make_segment(
    name: str,
    junction: tuple[float, float],
    approach: str,
    exit_dir: str,
    open_dirs: tuple[str, ...],
    corridor_width: float = CORRIDOR_WIDTH,
    leg: float = LEG_LENGTH,
) -> Segment:
    half = corridor_width / 2.0
    j = np.array(junction, dtype=float)
    u = _DIRS[approach]
    e = _DIRS[exit_dir]
    entry = j - u * half
    exit_pt = j + e * half
    start_pt = entry - u * leg
    goal_pt = exit_pt + e * leg
    maneuver = _maneuver_of(u, e)

    pts = [start_pt, entry]
    if maneuver == "straight":
        pts.append(exit_pt)
        inner = 1
    else:
        center = entry + e * half
        a0 = math.atan2(*(entry - center)[::-1])
        a1 = math.atan2(*(exit_pt - center)[::-1])
        sweep = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi  # shortest arc
        for k in range(1, ARC_POINTS + 1):
            ang = a0 + sweep * k / ARC_POINTS
            pts.append(center + half * np.array([math.cos(ang), math.sin(ang)]))
        inner = ARC_POINTS
    pts.append(goal_pt)
    polyline = np.array(pts)
    counted = np.array([True] + [False] * inner + [True])

    wrong = []
    for d in open_dirs:
        if d == exit_dir:
            continue
        z = j + _DIRS[d] * (half + 0.8)
        wrong.append((float(z[0]), float(z[1]), WRONG_ZONE_RADIUS))

    heading = math.atan2(u[1], u[0])
    return Segment(
        name=name,
        maneuver=maneuver,
        start=Pose(float(start_pt[0]), float(start_pt[1]), heading),
        polyline=polyline,
        counted=counted,
        goal=(float(goal_pt[0]), float(goal_pt[1]), GOAL_RADIUS),
        wrong_zones=wrong,
        box_center=(float(j[0]), float(j[1])),
        box_half=half,
    )


# ---------------------------------------------------------------- named worlds

def _cross_segments(prefix: str, j: tuple[float, float], open_dirs=("N", "S", "E", "W")):
    """Ten segments through one 4-way cross: 4 lefts, 4 rights, 2 straights.

    Direction letters are travel directions: ("N", "W") approaches heading
    north and exits heading west (a left turn).
    """
    segs = []
    turn_plan = [("N", "W"), ("N", "E"), ("S", "E"), ("S", "W"),
                 ("E", "N"), ("E", "S"), ("W", "S"), ("W", "N")]
    for i, (app, ext) in enumerate(turn_plan):
        segs.append(make_segment(f"{prefix}-t{i}", j, app, ext, open_dirs))
    segs.append(make_segment(f"{prefix}-s0", j, "E", "E", open_dirs))
    segs.append(make_segment(f"{prefix}-s1", j, "W", "W", open_dirs))
    return segs


def _build_r1():
    gb = GridBuilder(30.0, 20.0, texture_seed=11)
    gb.carve(1, 10, 29, 10)
    gb.carve(10, 3, 10, 17)
    gb.carve(20, 3, 20, 17)
    segs = _cross_segments("x1", (10.0, 10.0)) + _cross_segments("x2", (20.0, 10.0))
    return gb, RouteSpec("R1", segs)


def _build_t_world(name, width, height, bar_y, bar_x0, bar_x1, stem_x, texture_seed):
    gb = GridBuilder(width, height, texture_seed=texture_seed)
    gb.carve(bar_x0, bar_y, bar_x1, bar_y)
    gb.carve(stem_x, 1, stem_x, bar_y)
    j = (stem_x, bar_y)
    open_dirs = ("S", "E", "W")
    segs = [
        make_segment(f"{name.lower()}-left", j, "N", "W", open_dirs),
        make_segment(f"{name.lower()}-right", j, "N", "E", open_dirs),
        make_segment(f"{name.lower()}-in-right", j, "E", "S", open_dirs),
        make_segment(f"{name.lower()}-in-left", j, "W", "S", open_dirs),
    ]
    return gb, j, open_dirs, segs


def _build_r2():
    gb, _, _, segs = _build_t_world("R2", 16.0, 10.0, 8.0, 1.0, 15.0, 8.0, texture_seed=23)
    return gb, RouteSpec("R2", segs)


def _build_r3():
    gb, _, _, segs = _build_t_world("R3", 20.0, 12.0, 10.0, 1.0, 19.0, 10.0, texture_seed=37)
    return gb, RouteSpec("R3", segs)


def _build_eval1():
    gb, j, open_dirs, segs = _build_t_world("E1", 24.0, 11.0, 9.0, 1.0, 23.0, 12.0, texture_seed=53)
    segs = segs[:2] + [
        make_segment("e1-in-right", j, "E", "S", open_dirs),
        make_segment("e1-in-left", j, "W", "S", open_dirs),
        make_segment("e1-straight-e", j, "E", "E", open_dirs),
        make_segment("e1-straight-w", j, "W", "W", open_dirs),
    ]
    return gb, RouteSpec("EVAL1", segs)


def _build_eval2():
    gb = GridBuilder(28.0, 11.0, texture_seed=71)
    gb.carve(1, 9, 27, 9)
    gb.carve(9, 1, 9, 9)
    gb.carve(19, 1, 19, 9)
    ja, jb = (9.0, 9.0), (19.0, 9.0)
    open_dirs = ("S", "E", "W")
    segs = [
        make_segment("e2-a-left", ja, "N", "W", open_dirs),
        make_segment("e2-a-right", ja, "N", "E", open_dirs),
        make_segment("e2-b-left", jb, "N", "W", open_dirs),
        make_segment("e2-b-right", jb, "N", "E", open_dirs),
    ]
    return gb, RouteSpec("EVAL2", segs)


def _build_loop():
    """Follow-course world: a rectangular circuit with a walking person.

    Corners open into 3 x 3 m rooms so a follower trailing a few meters
    keeps line of sight while the person rounds them.
    """
    gb = GridBuilder(14.0, 12.0, texture_seed=91)
    gb.carve(3, 3, 11, 3)
    gb.carve(11, 3, 11, 9)
    gb.carve(11, 9, 3, 9)
    gb.carve(3, 9, 3, 3)
    for cx, cy in ((3, 3), (11, 3), (11, 9), (3, 9)):
        gb.carve(cx - 0.75, cy - 0.75, cx + 0.75, cy + 0.75)
    return gb, RouteSpec("LOOP", [])


_BUILDERS = {
    "R1": _build_r1,
    "R2": _build_r2,
    "R3": _build_r3,
    "EVAL1": _build_eval1,
    "EVAL2": _build_eval2,
    "LOOP": _build_loop,
}

ROUTE_NAMES = tuple(n for n in _BUILDERS if n != "LOOP")


def builtin_route(
    name: str,
    seed: int = 0,
    body: BodyParams | None = None,
    obstacles: bool = False,
    obstacle_seed: int = 1,
) -> tuple[WorldState, RouteSpec]:
    """Build a named world and its route; the robot starts on segment 0."""
    key = name.upper()
    if key not in _BUILDERS:
        raise KeyError(f"unknown route {name!r}; known: {sorted(_BUILDERS)}")
    gb, route = _BUILDERS[key]()
    grid = gb.build()
    entities: list[Entity] = []
    if key == "LOOP":
        entities.append(
            Entity(
                kind="person",
                x=5.4,
                y=3.0,
                radius=0.15,
                height=0.3,
                waypoints=[
                    (5.4, 3.0),
                    (11.0, 3.0),
                    (11.0, 9.0),
                    (3.0, 9.0),
                    (3.0, 3.0),
                    (5.4, 3.0),
                ],
                speed=0.35,
            )
        )
        start = Pose(3.2, 3.0, 0.0)
    else:
        start = route.segments[0].start
        start = Pose(start.x, start.y, start.heading)
    world = make_world(grid, gb.resolution, start, body=body, entities=entities, seed=seed)
    if obstacles and route.segments:
        scatter_obstacles(world, route, np.random.default_rng(obstacle_seed))
    return world, route


def scatter_obstacles(world: WorldState, route: RouteSpec, rng: np.random.Generator) -> None:
    """Drop cylinder obstacles along counted legs, off the centerline.

    Obstacles sit 0.4 m to either side, stay out of intersection boxes and
    away from segment starts, and keep 1.2 m spacing.
    """
    radius = 0.25
    placed: list[tuple[float, float]] = []
    for seg in route.segments:
        for i in np.nonzero(seg.counted)[0]:
            a, b = seg.polyline[i], seg.polyline[i + 1]
            leg_len = float(np.linalg.norm(b - a))
            n_here = rng.poisson(leg_len / 6.0)
            for _ in range(n_here):
                t = rng.uniform(0.15, 0.85)
                side = 1.0 if rng.random() < 0.5 else -1.0
                d = (b - a) / leg_len
                normal = np.array([-d[1], d[0]])
                p = a + d * (t * leg_len) + normal * (side * 0.4)
                x, y = float(p[0]), float(p[1])
                if seg.in_box(x, y):
                    continue
                if math.hypot(x - seg.start.x, y - seg.start.y) < 1.5:
                    continue
                if any(math.hypot(x - px, y - py) < 1.2 for px, py in placed):
                    continue
                if disc_hits_grid(world.grid, world.resolution, x, y, radius + 0.05):
                    continue
                placed.append((x, y))
                world.entities.append(Entity(kind="obstacle", x=x, y=y, radius=radius, height=0.5))


# ---------------------------------------------------------------- JSON io

def route_to_json(route: RouteSpec) -> dict:
    return {
        "name": route.name,
        "segments": [
            {
                "name": s.name,
                "maneuver": s.maneuver,
                "start": [s.start.x, s.start.y, s.start.heading],
                "polyline": s.polyline.tolist(),
                "counted": [bool(c) for c in s.counted],
                "goal": list(s.goal),
                "wrong_zones": [list(z) for z in s.wrong_zones],
                "box_center": list(s.box_center),
                "box_half": s.box_half,
            }
            for s in route.segments
        ],
    }


def route_from_json(doc: dict) -> RouteSpec:
    segs = []
    for s in doc["segments"]:
        segs.append(
            Segment(
                name=s["name"],
                maneuver=s["maneuver"],
                start=Pose(*s["start"]),
                polyline=np.array(s["polyline"], dtype=float),
                counted=np.array(s["counted"], dtype=bool),
                goal=tuple(s["goal"]),
                wrong_zones=[tuple(z) for z in s["wrong_zones"]],
                box_center=tuple(s["box_center"]),
                box_half=s["box_half"],
            )
        )
    return RouteSpec(doc["name"], segs)
