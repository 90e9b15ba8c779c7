"""Metric 2D world model for a warehouse floor.

Poses, axis-aligned shelf rectangles, waypoint-driven pedestrians, a
unicycle robot plant, and the collision / clearance geometry the scenario
metrics are built on. Everything here is a plain value: operations return
new objects and never mutate their inputs, so world states can be shared
freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the interval (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose2D:
    """Planar pose. theta is the heading in radians, kept in (-pi, pi]."""

    x: float  # m
    y: float  # m
    theta: float  # rad

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Shelf:
    """Axis-aligned shelf footprint."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError(f"degenerate shelf rectangle: {self}")

    def distance_to(self, point: tuple[float, float]) -> float:
        dx = max(self.min_x - point[0], 0.0, point[0] - self.max_x)
        dy = max(self.min_y - point[1], 0.0, point[1] - self.max_y)
        return math.hypot(dx, dy)

    def nearest_point(self, point: tuple[float, float]) -> tuple[float, float]:
        return (
            min(max(point[0], self.min_x), self.max_x),
            min(max(point[1], self.min_y), self.max_y),
        )

    def contains(self, point: tuple[float, float]) -> bool:
        return self.min_x <= point[0] <= self.max_x and self.min_y <= point[1] <= self.max_y


@dataclass(frozen=True)
class Pedestrian:
    """A walking (or standing) person following a fixed waypoint route.

    The person holds position once the final waypoint is reached. For
    collision purposes the body is a circle of diameter shoulder_width;
    height and shoulder_width also set the visual extent for the camera.
    """

    id: str
    position: tuple[float, float]  # m
    height: float  # m
    shoulder_width: float  # m
    speed: float  # m/s
    waypoints: tuple[tuple[float, float], ...]
    waypoint_index: int = 0
    spawn_time: float = 0.0  # s

    def __post_init__(self) -> None:
        if self.height <= 0.0:
            raise ValueError(f"pedestrian {self.id}: height must be positive")
        if self.shoulder_width <= 0.0:
            raise ValueError(f"pedestrian {self.id}: shoulder_width must be positive")
        if self.speed < 0.0:
            raise ValueError(f"pedestrian {self.id}: speed must be non-negative")
        if not self.waypoints:
            raise ValueError(f"pedestrian {self.id}: needs at least one waypoint")
        if not 0 <= self.waypoint_index < len(self.waypoints):
            raise ValueError(f"pedestrian {self.id}: waypoint_index out of range")

    @property
    def radius(self) -> float:
        return self.shoulder_width / 2.0

    def reached_final_waypoint(self) -> bool:
        if self.waypoint_index != len(self.waypoints) - 1:
            return False
        last = self.waypoints[-1]
        return math.hypot(self.position[0] - last[0], self.position[1] - last[1]) < 1e-9


@dataclass(frozen=True)
class RobotPlant:
    """Unicycle robot plant: commanded with forward speed and turn rate."""

    pose: Pose2D
    radius: float = 0.25  # m
    max_speed: float = 1.2  # m/s
    max_turn_rate: float = 1.5  # rad/s

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError("robot radius must be positive")
        if self.max_speed < 0.0 or self.max_turn_rate < 0.0:
            raise ValueError("robot speed limits must be non-negative")

    def clamp_command(self, v: float, omega: float) -> tuple[float, float]:
        """Clamp a command to [0, max_speed] x [-max_turn_rate, max_turn_rate]."""
        return (
            min(max(v, 0.0), self.max_speed),
            min(max(omega, -self.max_turn_rate), self.max_turn_rate),
        )


@dataclass(frozen=True)
class WorldState:
    """Snapshot of everything on the floor at one instant."""

    time: float  # s
    robot: RobotPlant
    pedestrians: tuple[Pedestrian, ...]
    shelves: tuple[Shelf, ...]
    bounds: tuple[float, float, float, float]  # min_x, min_y, max_x, max_y

    def active_pedestrians(self) -> tuple[Pedestrian, ...]:
        """Pedestrians that have spawned by the current time."""
        return tuple(p for p in self.pedestrians if p.spawn_time <= self.time + 1e-9)


@dataclass(frozen=True)
class CollisionReport:
    """Per-tick collision and clearance summary for the robot."""

    shelf_collision: bool
    pedestrian_collision: bool
    hit_pedestrian_ids: tuple[str, ...]
    min_clearance: float  # robot center to nearest shelf, m (inf without shelves)
    min_pedestrian_gap: float  # robot surface to pedestrian surface, m (inf without pedestrians)


def step_unicycle(pose: Pose2D, v: float, omega: float, dt: float) -> Pose2D:
    """Advance a unicycle pose by one step of constant (v, omega).

    Uses the closed-form arc so trajectories do not depend on how finely
    the caller subdivides time; falls back to the straight-line form when
    |omega| is negligible.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if abs(omega) < 1e-9:
        return Pose2D(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            pose.theta,
        )
    radius = v / omega
    theta_new = pose.theta + omega * dt
    x = pose.x + radius * (math.sin(theta_new) - math.sin(pose.theta))
    y = pose.y - radius * (math.cos(theta_new) - math.cos(pose.theta))
    return Pose2D(x, y, wrap_angle(theta_new))


def advance_pedestrian(p: Pedestrian, dt: float) -> Pedestrian:
    """Move a pedestrian speed*dt toward its current waypoint.

    Arrival within one step snaps to the waypoint and advances the
    waypoint index; after the final waypoint the pedestrian holds.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    step = p.speed * dt
    if step <= 0.0:
        return p
    target = p.waypoints[p.waypoint_index]
    dx = target[0] - p.position[0]
    dy = target[1] - p.position[1]
    dist = math.hypot(dx, dy)
    if dist <= step:
        if p.waypoint_index == len(p.waypoints) - 1:
            if dist == 0.0:
                return p
            return replace(p, position=target)
        return replace(p, position=target, waypoint_index=p.waypoint_index + 1)
    scale = step / dist
    return replace(p, position=(p.position[0] + dx * scale, p.position[1] + dy * scale))


def clearance(point: tuple[float, float], shelves) -> float:
    """Minimum Euclidean distance from a point to any shelf (0 inside).

    Returns +inf for an empty shelf list.
    """
    best = math.inf
    for shelf in shelves:
        best = min(best, shelf.distance_to(point))
    return best


def check_collision(world: WorldState) -> CollisionReport:
    """Check the robot against shelves and active pedestrians.

    Shelf collision: center clearance below the robot radius. Pedestrian
    collision: center distance below robot radius + half shoulder width.
    """
    robot = world.robot
    center = robot.pose.position()
    min_clear = clearance(center, world.shelves)
    shelf_hit = min_clear < robot.radius
    hits: list[str] = []
    min_gap = math.inf
    for p in world.active_pedestrians():
        d = math.hypot(center[0] - p.position[0], center[1] - p.position[1])
        min_gap = min(min_gap, d - robot.radius - p.radius)
        if d < robot.radius + p.radius:
            hits.append(p.id)
    return CollisionReport(
        shelf_collision=shelf_hit,
        pedestrian_collision=bool(hits),
        hit_pedestrian_ids=tuple(hits),
        min_clearance=min_clear,
        min_pedestrian_gap=min_gap,
    )
