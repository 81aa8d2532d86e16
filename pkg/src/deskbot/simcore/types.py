"""Core value types shared across the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    theta = math.fmod(theta, TWO_PI)
    if theta > math.pi:
        theta -= TWO_PI
    elif theta <= -math.pi:
        theta += TWO_PI
    return theta


@dataclass
class Action:
    """Normalized wheel commands. Left/right in [-1, 1]."""

    a_l: float
    a_r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a_l) and math.isfinite(self.a_r)):
            raise ValueError(f"action components must be finite, got ({self.a_l}, {self.a_r})")
        self.a_l = min(1.0, max(-1.0, float(self.a_l)))
        self.a_r = min(1.0, max(-1.0, float(self.a_r)))

    @property
    def steering(self) -> float:
        """Differential term: positive steers right."""
        return self.a_l - self.a_r

    def mirrored(self) -> "Action":
        return Action(self.a_r, self.a_l)


@dataclass
class Pose:
    x: float  # m
    y: float  # m
    heading: float  # rad, CCW from +x, wrapped to (-pi, pi]

    def __post_init__(self) -> None:
        self.heading = wrap_angle(self.heading)

    def forward(self) -> tuple[float, float]:
        return math.cos(self.heading), math.sin(self.heading)

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class BodyParams:
    """Physical parameters of one robot body."""

    track_width: float = 0.11  # m, distance between wheel contact lines
    wheel_radius: float = 0.032  # m
    max_wheel_speed: float = 1.5  # m/s at full command and nominal voltage
    motor_tau: float = 0.15  # s, first-order lag constant
    bias_l: float = 1.0  # multiplicative actuation gain, left side
    bias_r: float = 1.0
    actuation_noise_std: float = 0.02  # relative to max_wheel_speed
    ticks_per_rev: int = 20  # odometry encoder resolution
    footprint_radius: float = 0.12  # m, collision disc
    nominal_voltage: float = 11.1  # V, speed scale reference
    battery_full_voltage: float = 12.6  # V at soc=1
    battery_empty_voltage: float = 9.6  # V at soc=0
    battery_drain_rate: float = 0.000185  # soc per unit-duty-second, both wheels together

    @classmethod
    def randomized(cls, rng: np.random.Generator, **overrides: float) -> "BodyParams":
        """Draw per-side gains uniformly from [0.85, 1.15]."""
        bias_l = float(rng.uniform(0.85, 1.15))
        bias_r = float(rng.uniform(0.85, 1.15))
        return cls(bias_l=bias_l, bias_r=bias_r, **overrides)


@dataclass
class CameraConfig:
    width: int = 256
    height: int = 96
    fov_deg: float = 70.0  # horizontal
    mount_height: float = 0.15  # m above floor
    wall_height: float = 1.0  # m
    fog_gain: float = 0.30  # 1/m, distance dimming in 1/(1+g*d)
    pitch_deg: float = 0.0  # positive tilts the view up, shifting the horizon down

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def horizon_row(self) -> float:
        """Image row of the horizon; h/2 for a level camera."""
        return self.height / 2.0 + self.focal_px * math.tan(math.radians(self.pitch_deg))


@dataclass
class DetectionNoise:
    """Detector imperfection model; the default is a perfect detector."""

    confidence_alpha: float = 0.0  # beta-distribution a; 0 disables sampling
    confidence_beta: float = 0.0
    dropout_prob: float = 0.0  # chance a true detection is dropped
    false_positive_prob: float = 0.0  # chance of one spurious box per frame
    center_jitter_std: float = 0.0  # normalized image units

    @classmethod
    def moderate(cls) -> "DetectionNoise":
        return cls(
            confidence_alpha=9.0,
            confidence_beta=1.0,
            dropout_prob=0.05,
            false_positive_prob=0.02,
            center_jitter_std=0.01,
        )


@dataclass
class Detection:
    """Axis-aligned box in normalized image coordinates."""

    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    kind: str = "person"

    def iou(self, other: "Detection") -> float:
        ax0, ax1 = self.cx - self.w / 2, self.cx + self.w / 2
        ay0, ay1 = self.cy - self.h / 2, self.cy + self.h / 2
        bx0, bx1 = other.cx - other.w / 2, other.cx + other.w / 2
        by0, by1 = other.cy - other.h / 2, other.cy + other.h / 2
        ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
        iy = max(0.0, min(ay1, by1) - max(ay0, by0))
        inter = ix * iy
        union = self.w * self.h + other.w * other.h - inter
        if union <= 0.0:
            return 0.0
        return inter / union


@dataclass
class Entity:
    """A dynamic or static object placed in the world."""

    kind: str  # "person" | "obstacle"
    x: float
    y: float
    radius: float
    height: float = 0.6  # rendered height, m
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    speed: float = 0.0  # m/s along waypoints
    _wp_index: int = 0
    _wp_dir: int = 1  # +1 forward through waypoints, -1 back

    def copy(self) -> "Entity":
        return replace(self, waypoints=list(self.waypoints))
