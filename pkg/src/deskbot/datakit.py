"""Demonstration logging, the on-disk session format, and dataset loading.

A session directory holds `manifest.jsonl` (one record per control step),
`frames/%06d.png` (the camera frame each record was decided on), and
`meta.json` (route, seed, noise configuration, and a hash of the simulator
configuration). Collection runs the control loop at a fixed 20 Hz; recovery
data comes from injecting triangular steering impulses while logging the
*corrective* driver action as the label.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .firmware import StatusMsg
from .rig import Rig
from .simcore import (
    Action,
    BodyParams,
    CameraConfig,
    COMMANDS,
    DEFAULT_CAMERA,
    Pose,
    RouteSpec,
    Segment,
    WorldState,
    builtin_route,
    command_onehot,
    project_onto_polyline,
    render_camera,
    scatter_obstacles,
    scripted_expert,
    sonar_distance,
)
from .neuralnet.augment import adjust_photometrics

SCHEMA_VERSION = 1
CONTROL_HZ = 20
CONTROL_DT = 1.0 / CONTROL_HZ
SEGMENT_TIMEOUT = 90.0  # s before a stuck pass is abandoned
DEPARTURE_LATERAL = 2.0  # m off the segment path counts as beyond recovery


class DataError(Exception):
    """A session directory violates the on-disk contract."""


class RouteDepartureError(DataError):
    """The driver left the route beyond recovery; the session was voided."""


# ------------------------------------------------------------------ records

@dataclass
class DemoRecord:
    """One logged control step."""

    frame_id: int
    timestamp: float  # s since session start
    image_path: str  # relative to the session directory
    command: str  # left | straight | right
    label_action: tuple[float, float]  # driver's action, the training target
    applied_action: tuple[float, float]  # post-noise action sent to the board
    ticks_l: int
    ticks_r: int
    sonar: int  # cm
    battery: int  # mV
    noise_active: bool


def record_to_json(rec: DemoRecord) -> str:
    """One manifest line; integers in decimal, timestamp with 3 decimals."""
    parts = [
        f'"v":{SCHEMA_VERSION}',
        f'"frame_id":{rec.frame_id}',
        f'"timestamp":{rec.timestamp:.3f}',
        f'"image_path":{json.dumps(rec.image_path)}',
        f'"command":{json.dumps(rec.command)}',
        f'"label_action":[{json.dumps(rec.label_action[0])},{json.dumps(rec.label_action[1])}]',
        f'"applied_action":[{json.dumps(rec.applied_action[0])},{json.dumps(rec.applied_action[1])}]',
        f'"ticks_l":{rec.ticks_l}',
        f'"ticks_r":{rec.ticks_r}',
        f'"sonar":{rec.sonar}',
        f'"battery":{rec.battery}',
        f'"noise_active":{"true" if rec.noise_active else "false"}',
    ]
    return "{" + ",".join(parts) + "}"


def record_from_json(line: str | bytes) -> DemoRecord:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"unparseable manifest line: {exc}") from exc
    version = doc.get("v")
    if version != SCHEMA_VERSION:
        raise DataError(f"manifest schema version {version!r}, expected {SCHEMA_VERSION}")
    try:
        return DemoRecord(
            frame_id=int(doc["frame_id"]),
            timestamp=float(doc["timestamp"]),
            image_path=str(doc["image_path"]),
            command=str(doc["command"]),
            label_action=(float(doc["label_action"][0]), float(doc["label_action"][1])),
            applied_action=(float(doc["applied_action"][0]), float(doc["applied_action"][1])),
            ticks_l=int(doc["ticks_l"]),
            ticks_r=int(doc["ticks_r"]),
            sonar=int(doc["sonar"]),
            battery=int(doc["battery"]),
            noise_active=bool(doc["noise_active"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise DataError(f"malformed manifest record: {exc!r}") from exc


# ------------------------------------------------------------------ noise

@dataclass
class NoiseSchedule:
    """Poisson-arrival triangular steering impulses.

    At most one episode is active at a time; each draws a duration, a peak
    magnitude, and a side, ramps linearly up to the peak at mid-episode and
    back down, and the signed delta is split anti-symmetrically across the
    wheel channels.
    """

    mean_interval: float = 5.0  # s between episodes
    duration_range: tuple[float, float] = (0.5, 1.5)  # s
    peak_range: tuple[float, float] = (0.3, 0.9)  # steering magnitude

    def __post_init__(self) -> None:
        if self.peak_range[1] > 1.0:
            raise ValueError("noise peak cannot exceed full steering deflection")

    def to_json(self) -> dict:
        return {
            "mean_interval": self.mean_interval,
            "duration_range": list(self.duration_range),
            "peak_range": list(self.peak_range),
        }


class NoiseProcess:
    """Stateful sampler of a NoiseSchedule along a session timeline."""

    def __init__(self, schedule: NoiseSchedule, rng: np.random.Generator):
        self.schedule = schedule
        self.rng = rng
        self.active: tuple[float, float, float] | None = None  # start, duration, signed peak
        self._next_start = float(rng.exponential(schedule.mean_interval))

    def delta(self, t: float) -> float:
        """Signed steering delta at time t; call once per step, t increasing."""
        if self.active is None and t >= self._next_start:
            duration = float(self.rng.uniform(*self.schedule.duration_range))
            peak = float(self.rng.uniform(*self.schedule.peak_range))
            side = 1.0 if self.rng.random() < 0.5 else -1.0
            self.active = (self._next_start, duration, side * peak)
        if self.active is None:
            return 0.0
        start, duration, peak = self.active
        if t >= start + duration:
            self.active = None
            # Next arrival is relative to the end of this episode, so
            # episodes can never overlap.
            self._next_start = t + float(self.rng.exponential(self.schedule.mean_interval))
            return 0.0
        phase = (t - start) / duration
        return peak * (1.0 - abs(2.0 * phase - 1.0))


def apply_steering_delta(label: Action, delta: float) -> Action:
    """Split a steering delta across the wheels; the result stays in [0, 1]."""
    a_l = min(1.0, max(0.0, label.a_l + delta / 2.0))
    a_r = min(1.0, max(0.0, label.a_r - delta / 2.0))
    return Action(a_l, a_r)


# ------------------------------------------------------------------ writing

def sim_config_hash(body: BodyParams, camera: CameraConfig) -> str:
    """Stable hash of everything that shapes logged frames and physics."""
    doc = {
        "body": asdict(body),
        "camera": asdict(camera),
        "control_hz": CONTROL_HZ,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("ascii")
    return hashlib.sha256(blob).hexdigest()[:16]


class SessionWriter:
    """Incremental session logger: one PNG and one manifest row per step."""

    def __init__(self, session_dir: str | Path, meta: dict):
        self.dir = Path(session_dir)
        self.dir.mkdir(parents=True, exist_ok=False)
        (self.dir / "frames").mkdir()
        self._meta = dict(meta)
        self._manifest = open(self.dir / "manifest.jsonl", "wb")
        self._count = 0
        self._last_t = -math.inf

    @property
    def count(self) -> int:
        return self._count

    def add(
        self,
        image: np.ndarray,
        timestamp: float,
        command: str,
        label: Action,
        applied: Action,
        status: StatusMsg,
        noise_active: bool,
    ) -> DemoRecord:
        if timestamp <= self._last_t:
            raise ValueError(f"timestamps must strictly increase ({timestamp} after {self._last_t})")
        self._last_t = timestamp
        if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) uint8 frame, got {image.dtype} {image.shape}")
        rel = f"frames/{self._count:06d}.png"
        Image.fromarray(image, mode="RGB").save(self.dir / rel)
        rec = DemoRecord(
            frame_id=self._count,
            timestamp=timestamp,
            image_path=rel,
            command=command,
            label_action=(label.a_l, label.a_r),
            applied_action=(applied.a_l, applied.a_r),
            ticks_l=status.ticks_left,
            ticks_r=status.ticks_right,
            sonar=status.sonar_cm,
            battery=status.millivolts,
            noise_active=noise_active,
        )
        self._manifest.write(record_to_json(rec).encode("ascii") + b"\n")
        self._count += 1
        return rec

    def finalize(self, valid: bool = True) -> Path:
        self._manifest.close()
        meta = dict(self._meta)
        meta["frames"] = self._count
        meta["valid"] = valid
        (self.dir / "meta.json").write_bytes(
            json.dumps(meta, sort_keys=True, indent=2).encode("ascii") + b"\n"
        )
        return self.dir


# ------------------------------------------------------------------ collection

@dataclass
class CameraJitter:
    """Per-session camera perturbation, mimicking collection across devices."""

    pitch_deg: float = 3.0  # max |pitch| offset
    height_m: float = 0.02  # max |mount height| offset
    hue: float = 0.03  # max |hue| offset, cycles
    exposure: float = 0.15  # max relative gain offset


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """Float [0, 1] frame to 8-bit RGB, rounding to nearest."""
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def scripted_driver(world: WorldState, segment: Segment) -> tuple[Action, str]:
    action, onehot = scripted_expert(world, segment)
    return action, COMMANDS[int(np.argmax(onehot))]


def collect(
    out_dir: str | Path,
    route: str,
    minutes: float,
    *,
    noise: bool = True,
    obstacles: bool = False,
    seed: int = 0,
    camera: CameraConfig = DEFAULT_CAMERA,
    body: BodyParams | None = None,
    schedule: NoiseSchedule | None = None,
    driver=None,
    jitter: CameraJitter | None = None,
    session_name: str | None = None,
) -> Path:
    """Drive a route with the scripted driver and log a session.

    Runs at 20 Hz for exactly round(minutes * 60 * 20) records, cycling
    through the route's segments (teleporting to each start). Returns the
    session directory. Identical arguments produce byte-identical manifests.
    """
    if minutes <= 0:
        raise ValueError("minutes must be positive")
    schedule = schedule or NoiseSchedule()
    driver = driver or scripted_driver
    world, spec = builtin_route(route, seed=seed, body=body)
    if not spec.segments:
        raise ValueError(f"route {route!r} has no drivable segments")
    if obstacles:
        scatter_obstacles(world, spec, np.random.default_rng([seed, 0x0B5]))
    noise_proc = NoiseProcess(schedule, np.random.default_rng([seed, 0xD17]))

    cam = camera
    photo: tuple[np.ndarray, ...] | None = None
    if jitter is not None:
        jrng = np.random.default_rng([seed, 0xCA4])
        cam = replace(
            camera,
            pitch_deg=camera.pitch_deg + float(jrng.uniform(-jitter.pitch_deg, jitter.pitch_deg)),
            mount_height=camera.mount_height + float(jrng.uniform(-jitter.height_m, jitter.height_m)),
        )
        dh = np.full(1, jrng.uniform(-jitter.hue, jitter.hue), dtype=np.float32)
        gain = np.full(1, jrng.uniform(1.0 - jitter.exposure, 1.0 + jitter.exposure), dtype=np.float32)
        ones = np.ones(1, dtype=np.float32)
        zeros = np.zeros(1, dtype=np.float32)
        photo = (dh, ones, gain, zeros)  # hue shift + gain folded into contrast slot

    name = session_name or f"{route.lower()}-s{seed:04d}"
    meta = {
        "v": SCHEMA_VERSION,
        "route": spec.name,
        "seed": seed,
        "minutes": minutes,
        "driver": "scripted" if driver is scripted_driver else "external",
        "noise": schedule.to_json() if noise else None,
        "obstacles": obstacles,
        "camera": asdict(cam),
        "control_hz": CONTROL_HZ,
        "sim_config_hash": sim_config_hash(world.body, cam),
    }
    writer = SessionWriter(Path(out_dir) / name, meta)

    rig = Rig(world, camera=cam)
    # Seed the board's sensor filters so the first record carries real readings.
    rig.firmware.tick(0.0, 0.0, 0.0, world.battery_voltage, sonar_distance(world))

    n_frames = round(minutes * 60 * CONTROL_HZ)
    k = 0
    seg_cursor = 0
    try:
        while k < n_frames:
            seg = spec.segments[seg_cursor % len(spec.segments)]
            seg_cursor += 1
            world.robot = Pose(seg.start.x, seg.start.y, seg.start.heading)
            world.v_l = 0.0
            world.v_r = 0.0
            seg_start_k = k
            while k < n_frames:
                if (k - seg_start_k) * CONTROL_DT > SEGMENT_TIMEOUT:
                    break
                frame = render_camera(world, cam)
                if photo is not None:
                    frame = adjust_photometrics(frame[None], *photo)[0]
                label, command = driver(world, seg)
                t = k * CONTROL_DT
                delta = noise_proc.delta(t) if noise else 0.0
                applied = apply_steering_delta(label, delta) if delta != 0.0 else label
                writer.add(
                    to_uint8(frame),
                    timestamp=t,
                    command=command,
                    label=label,
                    applied=applied,
                    status=rig.firmware.status(),
                    noise_active=noise and noise_proc.active is not None,
                )
                rig.drive(applied, CONTROL_DT)
                k += 1
                _, lateral = project_onto_polyline(seg.polyline, world.robot.x, world.robot.y)
                if abs(lateral) > DEPARTURE_LATERAL:
                    writer.finalize(valid=False)
                    raise RouteDepartureError(
                        f"left the path by {abs(lateral):.2f} m at record {k - 1}; session voided"
                    )
                gx, gy, gr = seg.goal
                if math.hypot(world.robot.x - gx, world.robot.y - gy) <= gr:
                    break
    except RouteDepartureError:
        raise
    except BaseException:
        writer.finalize(valid=False)
        raise
    return writer.finalize(valid=True)


# ------------------------------------------------------------------ loading

@dataclass
class Session:
    dir: Path
    meta: dict
    records: list[DemoRecord]


@dataclass
class Dataset:
    """In-memory sample store; the label action is the training target."""

    images: np.ndarray  # (N, H, W, 3) uint8
    commands: np.ndarray  # (N, 3) float32 one-hot (left, straight, right)
    actions: np.ndarray  # (N, 2) float32 label actions in [0, 1]
    noise_active: np.ndarray  # (N,) bool
    sessions: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.images, self.commands, self.actions

    @property
    def steering(self) -> np.ndarray:
        return self.actions[:, 0] - self.actions[:, 1]


def load_session(session_dir: str | Path) -> Session:
    """Read and validate one session directory (metadata and manifest only)."""
    d = Path(session_dir)
    meta_path = d / "meta.json"
    manifest_path = d / "manifest.jsonl"
    if not meta_path.is_file() or not manifest_path.is_file():
        raise DataError(f"{d}: not a session directory (missing meta.json or manifest.jsonl)")
    meta = json.loads(meta_path.read_text())
    if meta.get("v") != SCHEMA_VERSION:
        raise DataError(f"{d}: meta schema version {meta.get('v')!r}, expected {SCHEMA_VERSION}")
    if not meta.get("valid", False):
        raise DataError(f"{d}: session is marked invalid")

    records = []
    last_t = -math.inf
    with open(manifest_path, "rb") as fh:
        for line_no, line in enumerate(fh):
            try:
                rec = record_from_json(line)
            except DataError as exc:
                raise DataError(f"{d} line {line_no + 1}: {exc}") from exc
            if rec.timestamp <= last_t:
                raise DataError(f"{d}: timestamps not strictly increasing at frame {rec.frame_id}")
            last_t = rec.timestamp
            records.append(rec)

    png_names = {p.name for p in (d / "frames").glob("*.png")} if (d / "frames").is_dir() else set()
    referenced = {Path(r.image_path).name for r in records}
    missing = sorted(referenced - png_names)
    if missing:
        raise DataError(f"{d}: manifest references missing frames, e.g. {missing[0]}")
    orphans = sorted(png_names - referenced)
    if orphans:
        raise DataError(f"{d}: frames without manifest rows, e.g. {orphans[0]}")
    if meta.get("frames") != len(records):
        raise DataError(f"{d}: meta counts {meta.get('frames')} frames, manifest has {len(records)}")
    return Session(dir=d, meta=meta, records=records)


def _session_arrays(session: Session) -> tuple[np.ndarray, ...]:
    images = []
    for rec in session.records:
        path = session.dir / rec.image_path
        try:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"))
        except (OSError, SyntaxError) as exc:
            raise DataError(f"{session.dir}: frame {rec.frame_id} unreadable: {exc}") from exc
        images.append(arr)
    commands = np.stack([command_onehot(r.command) for r in session.records])
    actions = np.array([r.label_action for r in session.records], dtype=np.float32)
    flags = np.array([r.noise_active for r in session.records], dtype=bool)
    return np.stack(images), commands, actions, flags


def dataset_from_sessions(sessions: list[Session]) -> Dataset:
    if not sessions:
        return Dataset(
            images=np.zeros((0, 1, 1, 3), np.uint8),
            commands=np.zeros((0, 3), np.float32),
            actions=np.zeros((0, 2), np.float32),
            noise_active=np.zeros(0, bool),
        )
    parts = [_session_arrays(s) for s in sessions]
    return Dataset(
        images=np.concatenate([p[0] for p in parts]),
        commands=np.concatenate([p[1] for p in parts]),
        actions=np.concatenate([p[2] for p in parts]),
        noise_active=np.concatenate([p[3] for p in parts]),
        sessions=[str(s.dir) for s in sessions],
    )


def load_dataset(
    dirs: list[str | Path], split_seed: int = 0, val_fraction: float = 0.1
) -> tuple[Dataset, Dataset]:
    """Load sessions and split them 90/10 at session granularity."""
    if not dirs:
        raise ValueError("no session directories given")
    sessions = [load_session(d) for d in dirs]
    if val_fraction <= 0.0:
        return dataset_from_sessions(sessions), dataset_from_sessions([])
    if len(sessions) < 2:
        raise ValueError("need at least two sessions for a session-level split")
    order = np.random.default_rng(split_seed).permutation(len(sessions))
    n_val = max(1, round(len(sessions) * val_fraction))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(sessions) if i not in val_idx]
    val = [s for i, s in enumerate(sessions) if i in val_idx]
    return dataset_from_sessions(train), dataset_from_sessions(val)


# ------------------------------------------------------------------ statistics

STEERING_BINS = 21


@dataclass
class DatasetStats:
    steering_hist: np.ndarray  # (21,) counts over [-1, 1]
    bin_edges: np.ndarray  # (22,)
    command_counts: dict[str, int]
    noise_fraction: float
    size: int


def dataset_stats(dataset: Dataset) -> DatasetStats:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    hist, edges = np.histogram(dataset.steering, bins=STEERING_BINS, range=(-1.0, 1.0))
    counts = {
        name: int(dataset.commands[:, i].sum()) for i, name in enumerate(COMMANDS)
    }
    return DatasetStats(
        steering_hist=hist,
        bin_edges=edges,
        command_counts=counts,
        noise_fraction=float(dataset.noise_active.mean()),
        size=len(dataset),
    )
