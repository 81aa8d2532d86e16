"""World state, kinematics step, collision, and JSON serialization.

The world is an occupancy grid plus a single robot and a list of entities.
Grid cells are uint8: 0 means free, any nonzero value is a wall and the value
doubles as the wall's texture id. One cell is `resolution` meters on a side;
cell (row, col) covers x in [col*res, (col+1)*res), y in [row*res, (row+1)*res).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .types import Action, BodyParams, Entity, Pose, wrap_angle

SCHEMA_VERSION = 1


@dataclass
class WorldState:
    grid: np.ndarray  # uint8 (rows, cols); 0 free, nonzero wall texture id
    resolution: float  # m per cell
    robot: Pose
    body: BodyParams
    rng: np.random.Generator
    v_l: float = 0.0  # m/s, left wheel ground speed
    v_r: float = 0.0
    entities: list[Entity] = field(default_factory=list)
    battery_soc: float = 0.5  # nominal voltage at the midpoint of the linear curve
    time: float = 0.0
    collided: bool = False  # set by the most recent step
    collision_count: int = 0

    @property
    def battery_voltage(self) -> float:
        b = self.body
        return b.battery_empty_voltage + (b.battery_full_voltage - b.battery_empty_voltage) * self.battery_soc

    @property
    def extent(self) -> tuple[float, float]:
        """(width_m, height_m) of the grid."""
        rows, cols = self.grid.shape
        return cols * self.resolution, rows * self.resolution

    def copy(self) -> "WorldState":
        clone = WorldState(
            grid=self.grid,  # shared; grids are never mutated after construction
            resolution=self.resolution,
            robot=Pose(self.robot.x, self.robot.y, self.robot.heading),
            body=self.body,
            rng=np.random.default_rng(),
            v_l=self.v_l,
            v_r=self.v_r,
            entities=[e.copy() for e in self.entities],
            battery_soc=self.battery_soc,
            time=self.time,
            collided=self.collided,
            collision_count=self.collision_count,
        )
        clone.rng.bit_generator.state = self.rng.bit_generator.state
        return clone

    def grid_digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.grid).tobytes())
        h.update(f"{self.resolution:.6f}".encode())
        return h.hexdigest()


def make_world(
    grid: np.ndarray,
    resolution: float,
    robot: Pose,
    body: BodyParams | None = None,
    entities: list[Entity] | None = None,
    seed: int = 0,
    battery_soc: float = 0.5,
) -> WorldState:
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    return WorldState(
        grid=grid,
        resolution=float(resolution),
        robot=robot,
        body=body or BodyParams(),
        rng=np.random.default_rng(seed),
        entities=entities or [],
        battery_soc=battery_soc,
    )


# ---------------------------------------------------------------- collision

def disc_hits_grid(grid: np.ndarray, resolution: float, x: float, y: float, radius: float) -> bool:
    """True if a disc at (x, y) overlaps any wall cell or leaves the grid."""
    rows, cols = grid.shape
    if x - radius < 0.0 or y - radius < 0.0:
        return True
    if x + radius > cols * resolution or y + radius > rows * resolution:
        return True
    c0 = int((x - radius) / resolution)
    c1 = int((x + radius) / resolution)
    r0 = int((y - radius) / resolution)
    r1 = int((y + radius) / resolution)
    c0, c1 = max(c0, 0), min(c1, cols - 1)
    r0, r1 = max(r0, 0), min(r1, rows - 1)
    patch = grid[r0 : r1 + 1, c0 : c1 + 1]
    if not patch.any():
        return False
    rr, cc = np.nonzero(patch)
    # Nearest point on each wall cell's square to the disc center.
    cell_x0 = (cc + c0) * resolution
    cell_y0 = (rr + r0) * resolution
    nx = np.clip(x, cell_x0, cell_x0 + resolution)
    ny = np.clip(y, cell_y0, cell_y0 + resolution)
    d2 = (nx - x) ** 2 + (ny - y) ** 2
    return bool((d2 < radius * radius).any())


def robot_collides(world: WorldState, x: float, y: float) -> bool:
    r = world.body.footprint_radius
    if disc_hits_grid(world.grid, world.resolution, x, y, r):
        return True
    for e in world.entities:
        if e.radius <= 0.0:
            continue
        if math.hypot(e.x - x, e.y - y) < r + e.radius:
            return True
    return False


# ---------------------------------------------------------------- stepping

def _advance_entity(e: Entity, dt: float) -> None:
    """Walk the waypoints at constant speed.

    A closed list (first point repeated at the end) cycles forever in one
    direction; an open list ping-pongs back and forth.
    """
    if e.speed <= 0.0 or len(e.waypoints) < 2:
        return
    closed = e.waypoints[0] == e.waypoints[-1]
    remaining = e.speed * dt
    while remaining > 1e-12:
        tx, ty = e.waypoints[e._wp_index]
        dx, dy = tx - e.x, ty - e.y
        dist = math.hypot(dx, dy)
        if dist <= remaining:
            e.x, e.y = tx, ty
            remaining -= dist
            if closed:
                nxt = e._wp_index + 1
                if nxt >= len(e.waypoints):
                    nxt = 1  # index 0 duplicates the endpoint just reached
            else:
                nxt = e._wp_index + e._wp_dir
                if nxt < 0 or nxt >= len(e.waypoints):
                    e._wp_dir = -e._wp_dir
                    nxt = e._wp_index + e._wp_dir
            e._wp_index = nxt
        else:
            e.x += dx / dist * remaining
            e.y += dy / dist * remaining
            remaining = 0.0


def step(world: WorldState, action: Action, dt: float) -> WorldState:
    """Advance the world by dt seconds under the given wheel commands.

    Mutates `world` in place and returns it. Motor response is a first-order
    lag toward a target speed scaled by battery voltage and per-side gain;
    pose integration uses the midpoint heading. On contact the position
    freezes for the step but heading still integrates, so the robot can
    turn away from a wall.
    """
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be a positive finite number, got {dt}")
    b = world.body
    scale = world.battery_voltage / b.nominal_voltage
    target_l = b.bias_l * action.a_l * b.max_wheel_speed * scale
    target_r = b.bias_r * action.a_r * b.max_wheel_speed * scale
    if b.actuation_noise_std > 0.0:
        noise = world.rng.normal(0.0, b.actuation_noise_std * b.max_wheel_speed, 2)
        target_l += noise[0]
        target_r += noise[1]
    alpha = 1.0 - math.exp(-dt / b.motor_tau)
    world.v_l += (target_l - world.v_l) * alpha
    world.v_r += (target_r - world.v_r) * alpha

    v = 0.5 * (world.v_l + world.v_r)
    omega = (world.v_r - world.v_l) / b.track_width
    mid = world.robot.heading + 0.5 * omega * dt
    nx = world.robot.x + v * math.cos(mid) * dt
    ny = world.robot.y + v * math.sin(mid) * dt

    world.collided = robot_collides(world, nx, ny)
    if world.collided:
        world.collision_count += 1
    else:
        world.robot.x = nx
        world.robot.y = ny
    world.robot.heading = wrap_angle(world.robot.heading + omega * dt)

    for e in world.entities:
        _advance_entity(e, dt)

    duty = abs(action.a_l) + abs(action.a_r)
    world.battery_soc = max(0.0, world.battery_soc - b.battery_drain_rate * duty * dt)
    world.time += dt
    return world


def body_speed(world: WorldState) -> float:
    """Ground speed of the body center, m/s."""
    return abs(0.5 * (world.v_l + world.v_r))


# ---------------------------------------------------------------- mirroring

def mirror_world(world: WorldState) -> WorldState:
    """Reflect the world across the horizontal axis (y -> H - y).

    Left and right swap everywhere: grid rows flip, headings negate, wheel
    speeds exchange. Useful for symmetry checks; the RNG stream is cloned,
    so mirrored runs only stay paired while no noise is drawn.
    """
    rows = world.grid.shape[0]
    height = rows * world.resolution
    m = WorldState(
        grid=np.ascontiguousarray(np.flipud(world.grid)),
        resolution=world.resolution,
        robot=Pose(world.robot.x, height - world.robot.y, -world.robot.heading),
        body=BodyParams(**{**asdict(world.body), "bias_l": world.body.bias_r, "bias_r": world.body.bias_l}),
        rng=np.random.default_rng(),
        v_l=world.v_r,
        v_r=world.v_l,
        battery_soc=world.battery_soc,
        time=world.time,
        collided=world.collided,
        collision_count=world.collision_count,
    )
    m.rng.bit_generator.state = world.rng.bit_generator.state
    for e in world.entities:
        me = e.copy()
        me.y = height - e.y
        me.waypoints = [(wx, height - wy) for wx, wy in e.waypoints]
        m.entities.append(me)
    return m


# ---------------------------------------------------------------- JSON io

def _rle_encode_row(row: np.ndarray) -> list[int]:
    """[value, run_length, value, run_length, ...]"""
    out: list[int] = []
    changes = np.nonzero(np.diff(row))[0]
    start = 0
    for idx in changes:
        out.extend((int(row[start]), int(idx) + 1 - start))
        start = int(idx) + 1
    out.extend((int(row[start]), len(row) - start))
    return out


def _rle_decode_row(runs: list[int], cols: int) -> np.ndarray:
    row = np.empty(cols, dtype=np.uint8)
    pos = 0
    for value, count in zip(runs[0::2], runs[1::2]):
        row[pos : pos + count] = value
        pos += count
    if pos != cols:
        raise ValueError(f"run-length row decodes to {pos} cells, expected {cols}")
    return row


def world_to_json(world: WorldState, routes: list | None = None) -> dict:
    rows, cols = world.grid.shape
    doc = {
        "schema": SCHEMA_VERSION,
        "resolution": world.resolution,
        "grid": {
            "rows": rows,
            "cols": cols,
            "rle": [_rle_encode_row(world.grid[r]) for r in range(rows)],
        },
        "robot": {"x": world.robot.x, "y": world.robot.y, "heading": world.robot.heading},
        "body": asdict(world.body),
        "battery_soc": world.battery_soc,
        "entities": [
            {
                "kind": e.kind,
                "x": e.x,
                "y": e.y,
                "radius": e.radius,
                "height": e.height,
                "waypoints": [list(w) for w in e.waypoints],
                "speed": e.speed,
            }
            for e in world.entities
        ],
    }
    if routes is not None:
        from .routes import route_to_json  # local import to avoid a cycle

        doc["routes"] = [route_to_json(r) for r in routes]
    return doc


def world_from_json(doc: dict, seed: int = 0):
    """Returns (world, routes); routes is [] when the document has none."""
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported world schema: {doc.get('schema')!r}")
    g = doc["grid"]
    grid = np.stack([_rle_decode_row(runs, g["cols"]) for runs in g["rle"]])
    if grid.shape != (g["rows"], g["cols"]):
        raise ValueError("grid dimensions do not match row data")
    entities = [
        Entity(
            kind=e["kind"],
            x=e["x"],
            y=e["y"],
            radius=e["radius"],
            height=e.get("height", 0.6),
            waypoints=[tuple(w) for w in e.get("waypoints", [])],
            speed=e.get("speed", 0.0),
        )
        for e in doc.get("entities", [])
    ]
    world = make_world(
        grid=grid,
        resolution=doc["resolution"],
        robot=Pose(**doc["robot"]),
        body=BodyParams(**doc["body"]),
        entities=entities,
        seed=seed,
        battery_soc=doc.get("battery_soc", 0.5),
    )
    routes = []
    if "routes" in doc:
        from .routes import route_from_json

        routes = [route_from_json(r) for r in doc["routes"]]
    return world, routes


def save_world(path: str, world: WorldState, routes: list | None = None) -> None:
    with open(path, "w") as f:
        json.dump(world_to_json(world, routes), f)


def load_world(path: str, seed: int = 0):
    with open(path) as f:
        return world_from_json(json.load(f), seed=seed)
