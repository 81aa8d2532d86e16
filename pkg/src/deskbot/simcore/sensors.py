"""Raycast camera, sonar, and ground-truth person detections.

The camera is a single-row pinhole model swept over grid walls (one DDA cast
per image column) plus billboard sprites for entities. Column bearings are
built from an antisymmetric pixel-offset table, so a mirrored world renders
to an exactly mirrored image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import CameraConfig, Detection, DetectionNoise, Entity
from .world import WorldState

DEFAULT_CAMERA = CameraConfig()

# Wall palette: texture id t uses hue slot (t - 1) % 12.
_PALETTE_HUES = (np.arange(12) * 0.6180339887) % 1.0
_PALETTE_SAT = 0.45

FLOOR_RGB = np.array([0.30, 0.30, 0.32], dtype=np.float32)
CEILING_RGB = np.array([0.16, 0.16, 0.18], dtype=np.float32)
PERSON_RGB = np.array([0.20, 0.30, 0.90], dtype=np.float32)
OBSTACLE_RGB = np.array([0.55, 0.35, 0.16], dtype=np.float32)

_X_FACE_SHADE = 1.0
_Y_FACE_SHADE = 0.78


def _hsv_to_rgb_scalar(h: float, s: float, v: float) -> tuple[float, float, float]:
    i = int(h * 6.0) % 6
    f = h * 6.0 - math.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


_PALETTE_RGB = np.array(
    [_hsv_to_rgb_scalar(h, _PALETTE_SAT, 1.0) for h in _PALETTE_HUES], dtype=np.float32
)


def column_offsets(width: int) -> np.ndarray:
    """Signed pixel offsets of column centers from the optical axis.

    offsets[c] = width/2 - c - 0.5; exactly antisymmetric under c -> W-1-c.
    """
    c = np.arange(width, dtype=np.float64)
    return width / 2.0 - c - 0.5


def _build_dda_kernel():
    try:
        from numba import njit
    except ImportError:
        return None

    @njit(cache=True)
    def kernel(grid, px, py, dir_x, dir_y, max_cells, dist, side, tex):
        rows, cols = grid.shape
        for i in range(dir_x.shape[0]):
            dx = dir_x[i]
            dy = dir_y[i]
            map_x = int(math.floor(px))
            map_y = int(math.floor(py))
            delta_x = abs(1.0 / dx) if dx != 0.0 else np.inf
            delta_y = abs(1.0 / dy) if dy != 0.0 else np.inf
            if dx == 0.0:
                side_x = np.inf
            elif dx < 0.0:
                side_x = (px - map_x) * delta_x
            else:
                side_x = (map_x + 1.0 - px) * delta_x
            if dy == 0.0:
                side_y = np.inf
            elif dy < 0.0:
                side_y = (py - map_y) * delta_y
            else:
                side_y = (map_y + 1.0 - py) * delta_y
            step_x = -1 if dx < 0.0 else 1
            step_y = -1 if dy < 0.0 else 1
            while True:
                if side_x < side_y:
                    t = side_x
                    map_x += step_x
                    side_x += delta_x
                    s = 0
                else:
                    t = side_y
                    map_y += step_y
                    side_y += delta_y
                    s = 1
                if map_x < 0 or map_x >= cols or map_y < 0 or map_y >= rows:
                    cell = 1
                else:
                    cell = grid[map_y, map_x]
                if cell != 0 or t >= max_cells:
                    dist[i] = min(t, max_cells)
                    side[i] = s
                    tex[i] = 0 if t >= max_cells else cell
                    break

    return kernel


_dda_kernel = _build_dda_kernel()


def cast_rays(
    grid: np.ndarray,
    resolution: float,
    x: float,
    y: float,
    angles: np.ndarray,
    max_range: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """DDA over the occupancy grid for a batch of rays from one origin.

    Returns (distance_m, side, texture). side is 0 for hits on a cell face
    perpendicular to x and 1 for faces perpendicular to y. Rays that exhaust
    max_range report that range with side 0 and texture 0.

    Dispatches to a compiled kernel when numba is importable; the numpy
    implementation below is the reference and performs the identical
    float64 operation sequence, so both produce bit-equal results.
    """
    dir_x = np.cos(angles)
    dir_y = np.sin(angles)
    px = x / resolution
    py = y / resolution
    max_cells = max_range / resolution
    if _dda_kernel is not None:
        n = angles.shape[0]
        dist = np.empty(n, dtype=np.float64)
        side = np.empty(n, dtype=np.int8)
        tex = np.empty(n, dtype=np.uint8)
        _dda_kernel(grid, px, py, dir_x, dir_y, max_cells, dist, side, tex)
        return dist * resolution, side, tex
    return cast_rays_reference(grid, resolution, x, y, angles, max_range)


def cast_rays_reference(
    grid: np.ndarray,
    resolution: float,
    x: float,
    y: float,
    angles: np.ndarray,
    max_range: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pure-numpy DDA; see cast_rays."""
    rows, cols = grid.shape
    n = angles.shape[0]
    dir_x = np.cos(angles)
    dir_y = np.sin(angles)
    px = x / resolution
    py = y / resolution
    max_cells = max_range / resolution

    map_x = np.full(n, math.floor(px), dtype=np.int64)
    map_y = np.full(n, math.floor(py), dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta_x = np.abs(1.0 / dir_x)
        delta_y = np.abs(1.0 / dir_y)
        side_x = np.where(dir_x < 0.0, (px - map_x) * delta_x, (map_x + 1.0 - px) * delta_x)
        side_y = np.where(dir_y < 0.0, (py - map_y) * delta_y, (map_y + 1.0 - py) * delta_y)
    # An axis-parallel ray never crosses the other axis: 0 * inf above is nan.
    side_x[np.isnan(side_x) | np.isinf(delta_x)] = np.inf
    side_y[np.isnan(side_y) | np.isinf(delta_y)] = np.inf
    step_x = np.where(dir_x < 0.0, -1, 1)
    step_y = np.where(dir_y < 0.0, -1, 1)

    dist = np.full(n, max_cells, dtype=np.float64)
    side = np.zeros(n, dtype=np.int8)
    tex = np.zeros(n, dtype=np.uint8)
    # March compacted arrays; idx maps compact slots back to ray numbers.
    idx = np.arange(n)
    flat = grid.reshape(-1)

    while idx.size:
        go_x = side_x < side_y
        go_y = ~go_x
        t_cross = np.where(go_x, side_x, side_y)
        map_x += step_x * go_x
        map_y += step_y * go_y
        side_x += np.where(go_x, delta_x, 0.0)
        side_y += np.where(go_y, delta_y, 0.0)

        oob = (map_x < 0) | (map_x >= cols) | (map_y < 0) | (map_y >= rows)
        cell = flat[np.clip(map_y, 0, rows - 1) * cols + np.clip(map_x, 0, cols - 1)]
        cell[oob] = 1
        out_of_range = t_cross >= max_cells
        hit = (cell != 0) | out_of_range
        if hit.any():
            h = idx[hit]
            dist[h] = np.minimum(t_cross[hit], max_cells)
            side[h] = go_y[hit]
            tex[h] = np.where(out_of_range[hit], 0, cell[hit])
            keep = ~hit
            idx = idx[keep]
            map_x, map_y = map_x[keep], map_y[keep]
            side_x, side_y = side_x[keep], side_y[keep]
            delta_x, delta_y = delta_x[keep], delta_y[keep]
            step_x, step_y = step_x[keep], step_y[keep]
    return dist * resolution, side, tex


def _entity_frame(world: WorldState, e: Entity) -> tuple[float, float]:
    """Entity center in the robot frame: (forward, left)."""
    dx = e.x - world.robot.x
    dy = e.y - world.robot.y
    c = math.cos(world.robot.heading)
    s = math.sin(world.robot.heading)
    return dx * c + dy * s, -dx * s + dy * c


def render_camera(world: WorldState, cfg: CameraConfig = DEFAULT_CAMERA) -> np.ndarray:
    """Render an RGB frame, float32 (H, W, 3) in [0, 1]."""
    w, h = cfg.width, cfg.height
    f = cfg.focal_px
    offsets = column_offsets(w)
    betas = np.arctan2(offsets, f)
    angles = world.robot.heading + betas

    rows_m, cols_m = world.grid.shape
    diag = (rows_m + cols_m) * world.resolution
    dist, side, tex = cast_rays(
        world.grid, world.resolution, world.robot.x, world.robot.y, angles, max_range=diag
    )
    perp = dist * np.cos(betas)
    perp = np.maximum(perp, 1e-6)

    # Wall column colors: palette by texture id, face shade, distance dimming.
    base = _PALETTE_RGB[(tex.astype(np.int32) - 1) % 12]
    base[tex == 0] = 0.0
    face = np.where(side == 0, _X_FACE_SHADE, _Y_FACE_SHADE)
    fade = 1.0 / (1.0 + cfg.fog_gain * perp)
    wall_rgb = (base * (face * fade)[:, None]).astype(np.float32)

    half = cfg.horizon_row
    top = half - f * (cfg.wall_height - cfg.mount_height) / perp
    bot = half + f * cfg.mount_height / perp

    row_center = np.arange(h, dtype=np.float64)[:, None] + 0.5
    img = np.where(
        row_center[:, :, None] < half, CEILING_RGB[None, None, :], FLOOR_RGB[None, None, :]
    )
    img = np.broadcast_to(img, (h, w, 3)).astype(np.float32).copy()
    wall_mask = (row_center >= top[None, :]) & (row_center < bot[None, :])
    img[wall_mask] = np.broadcast_to(wall_rgb[None, :, :], (h, w, 3))[wall_mask]

    # Entity billboards, far to near, z-tested against walls per column.
    zbuf = perp.copy()
    order = sorted(
        range(len(world.entities)),
        key=lambda i: _entity_frame(world, world.entities[i])[0],
        reverse=True,
    )
    for i in order:
        e = world.entities[i]
        fx, ly = _entity_frame(world, e)
        if fx <= 0.05:
            continue
        lateral = offsets * fx / f  # ray lateral offset at the entity's depth
        col_mask = np.abs(lateral - ly) <= e.radius
        col_mask &= fx < zbuf
        if not col_mask.any():
            continue
        e_top = half - f * (e.height - cfg.mount_height) / fx
        e_bot = half + f * cfg.mount_height / fx
        span = (row_center >= e_top) & (row_center < e_bot)
        mask = span & col_mask[None, :]
        color = PERSON_RGB if e.kind == "person" else OBSTACLE_RGB
        shade = 1.0 / (1.0 + cfg.fog_gain * fx)
        img[mask] = (color * shade).astype(np.float32)
        zbuf[col_mask] = fx

    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------- sonar

SONAR_MAX_RANGE = 3.0  # m


def sonar_distance(world: WorldState, max_range: float = SONAR_MAX_RANGE) -> float:
    """Range to the nearest surface straight ahead, clipped to max_range."""
    ang = np.array([world.robot.heading])
    dist, _, _ = cast_rays(
        world.grid, world.resolution, world.robot.x, world.robot.y, ang, max_range
    )
    best = float(dist[0])
    dir_x, dir_y = math.cos(world.robot.heading), math.sin(world.robot.heading)
    for e in world.entities:
        if e.radius <= 0.0:
            continue
        t = _ray_circle(world.robot.x, world.robot.y, dir_x, dir_y, e.x, e.y, e.radius)
        if t is not None and t < best:
            best = t
    return min(best, max_range)


def _ray_circle(
    ox: float, oy: float, dx: float, dy: float, cx: float, cy: float, r: float
) -> float | None:
    """Smallest positive ray parameter hitting the circle, if any."""
    mx, my = ox - cx, oy - cy
    b = mx * dx + my * dy
    c = mx * mx + my * my - r * r
    disc = b * b - c
    if disc < 0.0:
        return None
    t = -b - math.sqrt(disc)
    if t < 0.0:
        return None
    return t


# ---------------------------------------------------------------- detections

def _line_of_sight(world: WorldState, tx: float, ty: float) -> bool:
    dx = tx - world.robot.x
    dy = ty - world.robot.y
    span = math.hypot(dx, dy)
    if span < 1e-9:
        return True
    ang = np.array([math.atan2(dy, dx)])
    dist, _, _ = cast_rays(world.grid, world.resolution, world.robot.x, world.robot.y, ang, span)
    return float(dist[0]) >= span - 1e-9


def ground_truth_detections(
    world: WorldState,
    noise: DetectionNoise = DetectionNoise(),
    cfg: CameraConfig = DEFAULT_CAMERA,
) -> list[Detection]:
    """Person bounding boxes as an idealized detector would emit them.

    Boxes are clipped to the frame; a person whose center is occluded or
    behind the camera yields nothing. With the default noise config the
    output is deterministic with confidence 1.0.
    """
    w, h = cfg.width, cfg.height
    f = cfg.focal_px
    out: list[Detection] = []
    for e in world.entities:
        if e.kind != "person":
            continue
        fx, ly = _entity_frame(world, e)
        if fx <= 0.05:
            continue
        if not _line_of_sight(world, e.x, e.y):
            continue
        cx_px = w / 2.0 - f * ly / fx
        half_w_px = f * e.radius / fx
        top_px = cfg.horizon_row - f * (e.height - cfg.mount_height) / fx
        bot_px = cfg.horizon_row + f * cfg.mount_height / fx
        x0 = max(cx_px - half_w_px, 0.0)
        x1 = min(cx_px + half_w_px, float(w))
        y0 = max(top_px, 0.0)
        y1 = min(bot_px, float(h))
        if x1 - x0 < 1.0 or y1 - y0 < 1.0:
            continue
        det = Detection(
            cx=(x0 + x1) / 2.0 / w,
            cy=(y0 + y1) / 2.0 / h,
            w=(x1 - x0) / w,
            h=(y1 - y0) / h,
            confidence=1.0,
        )
        if noise.confidence_alpha > 0.0:
            det.confidence = float(world.rng.beta(noise.confidence_alpha, noise.confidence_beta))
        if noise.center_jitter_std > 0.0:
            jit = world.rng.normal(0.0, noise.center_jitter_std, 2)
            det.cx = float(np.clip(det.cx + jit[0], det.w / 2, 1.0 - det.w / 2))
            det.cy = float(np.clip(det.cy + jit[1], det.h / 2, 1.0 - det.h / 2))
        if noise.dropout_prob > 0.0 and world.rng.random() < noise.dropout_prob:
            continue
        out.append(det)
    if noise.false_positive_prob > 0.0 and world.rng.random() < noise.false_positive_prob:
        fw = float(world.rng.uniform(0.05, 0.3))
        fh = float(world.rng.uniform(0.1, 0.5))
        out.append(
            Detection(
                cx=float(world.rng.uniform(fw / 2, 1.0 - fw / 2)),
                cy=float(world.rng.uniform(fh / 2, 1.0 - fh / 2)),
                w=fw,
                h=fh,
                confidence=float(world.rng.uniform(0.5, 0.9)),
            )
        )
    return out
