"""Artificial potential field local planner.

Classical quadratic attraction toward the followed person plus
inverse-clearance repulsion from shelves and bystanders. The resultant
force turns into a velocity command, and an arbitration rule hands
control from the following controller to the field as obstacle clearance
shrinks. Local minima (force balance away from the goal) are flagged,
not escaped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .follow import CommandTwist
from .world import WorldState, wrap_angle

RHO_FLOOR = 1e-6


@dataclass(frozen=True)
class ApfParams:
    k_att: float = 1.0
    k_rep: float = 0.5
    rho0: float = 1.5  # m, obstacle influence distance
    force_cap: float = 5.0
    blend_distance: float = 2.0  # m, clearance below which the field phases in
    local_min_epsilon: float = 0.05
    goal_radius: float = 2.0  # m
    k_omega: float = 2.0  # rad/s per rad of force-bearing error
    k_v: float = 0.5  # (m/s) per unit of aligned force

    def __post_init__(self) -> None:
        for name in ("k_att", "k_rep", "rho0", "force_cap", "blend_distance",
                     "local_min_epsilon", "goal_radius", "k_omega", "k_v"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ForceResult:
    attractive: tuple[float, float]
    repulsive: tuple[float, float]
    resultant: tuple[float, float]  # capped sum
    nearest_obstacle_distance: float  # m, robot surface to obstacle surface
    local_minimum_flag: bool


def attractive_potential(robot: tuple[float, float], goal: tuple[float, float],
                         k_att: float) -> float:
    dx = goal[0] - robot[0]
    dy = goal[1] - robot[1]
    return 0.5 * k_att * (dx * dx + dy * dy)


def attractive_force(robot: tuple[float, float], goal: tuple[float, float],
                     k_att: float) -> tuple[float, float]:
    """Negative gradient of the quadratic goal potential: k_att * (goal - robot)."""
    return (k_att * (goal[0] - robot[0]), k_att * (goal[1] - robot[1]))


def repulsive_potential(rho: float, k_rep: float, rho0: float) -> float:
    if rho >= rho0:
        return 0.0
    rho = max(rho, RHO_FLOOR)
    term = 1.0 / rho - 1.0 / rho0
    return 0.5 * k_rep * term * term


def repulsive_force(robot: tuple[float, float], obstacle_point: tuple[float, float],
                    rho: float, k_rep: float, rho0: float) -> tuple[float, float]:
    """Repulsion away from an obstacle's nearest point.

    Zero at and beyond the influence distance rho0; inside, magnitude
    k_rep * (1/rho - 1/rho0) / rho^2 pointing from the obstacle toward the
    robot (the negative gradient of the matching potential).
    """
    if rho >= rho0:
        return (0.0, 0.0)
    rho = max(rho, RHO_FLOOR)
    dx = robot[0] - obstacle_point[0]
    dy = robot[1] - obstacle_point[1]
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return (0.0, 0.0)
    magnitude = k_rep * (1.0 / rho - 1.0 / rho0) / (rho * rho)
    return (magnitude * dx / d, magnitude * dy / d)


def _obstacles(world: WorldState, exclude_pedestrian_id: str | None):
    """Yield (nearest obstacle point, surface clearance) pairs for the robot."""
    robot = world.robot
    rx, ry = robot.pose.x, robot.pose.y
    for shelf in world.shelves:
        point = shelf.nearest_point((rx, ry))
        d = math.hypot(rx - point[0], ry - point[1])
        yield point, max(d - robot.radius, RHO_FLOOR)
    for ped in world.active_pedestrians():
        if ped.id == exclude_pedestrian_id:
            continue
        d = math.hypot(rx - ped.position[0], ry - ped.position[1])
        yield ped.position, max(d - ped.radius - robot.radius, RHO_FLOOR)


def total_force(world: WorldState, goal: tuple[float, float],
                exclude_pedestrian_id: str | None, params: ApfParams) -> ForceResult:
    """Combined field at the robot: attraction to goal plus all repulsions.

    The followed person is excluded from repulsion so approaching them is
    possible. The resultant is capped at force_cap; a near-zero resultant
    away from the goal raises the local-minimum flag.
    """
    robot_xy = (world.robot.pose.x, world.robot.pose.y)
    ax, ay = attractive_force(robot_xy, goal, params.k_att)
    fx = fy = 0.0
    nearest = math.inf
    for point, rho in _obstacles(world, exclude_pedestrian_id):
        nearest = min(nearest, rho)
        rfx, rfy = repulsive_force(robot_xy, point, rho, params.k_rep, params.rho0)
        fx += rfx
        fy += rfy
    rx, ry = ax + fx, ay + fy
    magnitude = math.hypot(rx, ry)
    if magnitude > params.force_cap:
        scale = params.force_cap / magnitude
        rx *= scale
        ry *= scale
        magnitude = params.force_cap
    goal_dist = math.hypot(goal[0] - robot_xy[0], goal[1] - robot_xy[1])
    flag = magnitude < params.local_min_epsilon and goal_dist > params.goal_radius
    return ForceResult(
        attractive=(ax, ay),
        repulsive=(fx, fy),
        resultant=(rx, ry),
        nearest_obstacle_distance=nearest,
        local_minimum_flag=flag,
    )


def total_potential(world: WorldState, goal: tuple[float, float],
                    exclude_pedestrian_id: str | None, params: ApfParams) -> float:
    """Scalar potential matching total_force (for field dumps and checks)."""
    robot_xy = (world.robot.pose.x, world.robot.pose.y)
    u = attractive_potential(robot_xy, goal, params.k_att)
    for _point, rho in _obstacles(world, exclude_pedestrian_id):
        u += repulsive_potential(rho, params.k_rep, params.rho0)
    return u


def force_to_twist(force: tuple[float, float], robot_heading: float,
                   params: ApfParams, plant) -> CommandTwist:
    """Convert a force vector into a clamped (v, omega) command.

    Turn rate is proportional to the bearing error toward the force;
    forward speed scales with the aligned force component and is zero when
    the force points behind the robot.
    """
    fx, fy = force
    magnitude = math.hypot(fx, fy)
    if magnitude < 1e-12:
        return CommandTwist(0.0, 0.0)
    error = wrap_angle(math.atan2(fy, fx) - robot_heading)
    v = params.k_v * magnitude * max(0.0, math.cos(error))
    omega = params.k_omega * error
    v, omega = plant.clamp_command(v, omega)
    return CommandTwist(v, omega)


def blend(follow_cmd: CommandTwist, apf_cmd: CommandTwist, nearest_clearance: float,
          params: ApfParams) -> CommandTwist:
    """Arbitrate between following and field commands by obstacle clearance.

    Pure following beyond blend_distance, pure field inside half the
    influence distance, linear interpolation between.
    """
    lo = 0.5 * params.rho0
    hi = params.blend_distance
    if nearest_clearance >= hi:
        return follow_cmd
    if nearest_clearance <= lo or hi <= lo:
        return apf_cmd
    t = (nearest_clearance - lo) / (hi - lo)
    return CommandTwist(
        t * follow_cmd.v + (1.0 - t) * apf_cmd.v,
        t * follow_cmd.omega + (1.0 - t) * apf_cmd.omega,
    )
