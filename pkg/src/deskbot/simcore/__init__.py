"""Deterministic 2D differential-drive simulator."""

from .types import (
    Action,
    BodyParams,
    CameraConfig,
    Detection,
    DetectionNoise,
    Entity,
    Pose,
    wrap_angle,
)
from .world import (
    SCHEMA_VERSION,
    WorldState,
    body_speed,
    disc_hits_grid,
    load_world,
    make_world,
    mirror_world,
    robot_collides,
    save_world,
    step,
    world_from_json,
    world_to_json,
)
from .sensors import (
    DEFAULT_CAMERA,
    SONAR_MAX_RANGE,
    cast_rays,
    ground_truth_detections,
    render_camera,
    sonar_distance,
)
from .routes import (
    CORRIDOR_WIDTH,
    ROUTE_NAMES,
    RouteSpec,
    Segment,
    builtin_route,
    route_from_json,
    route_to_json,
    scatter_obstacles,
)
from .expert import (
    COMMANDS,
    ExpertParams,
    active_command,
    command_onehot,
    path_length,
    point_along,
    project_onto_polyline,
    scripted_expert,
)

__all__ = [
    "Action",
    "BodyParams",
    "CameraConfig",
    "Detection",
    "DetectionNoise",
    "Entity",
    "Pose",
    "wrap_angle",
    "SCHEMA_VERSION",
    "WorldState",
    "body_speed",
    "disc_hits_grid",
    "load_world",
    "make_world",
    "mirror_world",
    "robot_collides",
    "save_world",
    "step",
    "world_from_json",
    "world_to_json",
    "DEFAULT_CAMERA",
    "SONAR_MAX_RANGE",
    "cast_rays",
    "ground_truth_detections",
    "render_camera",
    "sonar_distance",
    "CORRIDOR_WIDTH",
    "ROUTE_NAMES",
    "RouteSpec",
    "Segment",
    "builtin_route",
    "route_from_json",
    "route_to_json",
    "scatter_obstacles",
    "COMMANDS",
    "ExpertParams",
    "active_command",
    "command_onehot",
    "path_length",
    "point_along",
    "project_onto_polyline",
    "scripted_expert",
]
