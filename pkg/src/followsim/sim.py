"""Fixed-timestep scenario engine.

One tick is: advance pedestrians, sense (project -> occlude -> corrupt),
track, maintain the target lock, compute following and field commands,
blend, clamp, move the robot, then score collisions and clearance. All
randomness is counter-based off the scenario seed, so equal configs give
bit-identical runs regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .apf import ApfParams, blend, force_to_twist, total_force
from .follow import (CommandTwist, FollowParams, LockState, TargetLock, TrackObservation,
                     acquire_target, follow_command, steer, update_lock)
from .sensor import (CameraModel, NoiseSpec, apply_occlusion, backproject, corrupt, project,
                     DEFAULT_OCCLUSION_FRACTION)
from .tracker import Tracker, TrackerParams, iou
from .world import (Pedestrian, Pose2D, RobotPlant, Shelf, WorldState, advance_pedestrian,
                    check_collision, step_unicycle)


class ConfigError(ValueError):
    """Invalid scenario configuration; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class SuccessCriteria:
    """Optional extra pass/fail thresholds evaluated by the CLI runner."""

    min_clearance: float | None = None  # m, shelf clearance floor
    max_final_distance: float | None = None  # m, robot-to-target ceiling


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    dt: float = 0.05  # s
    max_steps: int = 400
    rng_seed: int = 0
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 10.0)
    shelves: tuple[Shelf, ...] = ()
    robot: RobotPlant = RobotPlant(pose=Pose2D(0.0, 0.0, 0.0))
    pedestrians: tuple[Pedestrian, ...] = ()
    target_id: str | None = None
    camera: CameraModel = CameraModel()
    noise: NoiseSpec = NoiseSpec()
    occlusion_fraction: float = DEFAULT_OCCLUSION_FRACTION
    tracker: TrackerParams = TrackerParams()
    follow: FollowParams = FollowParams()
    apf: ApfParams = ApfParams()
    success: SuccessCriteria = SuccessCriteria()


@dataclass(frozen=True)
class TickRecord:
    """Post-step snapshot appended once per simulation step."""

    t: float
    robot_x: float
    robot_y: float
    robot_theta: float
    pedestrians: tuple[tuple[str, float, float], ...]  # (id, x, y) for active pedestrians
    lock_id: int | None
    cmd_v: float
    cmd_omega: float
    min_clearance: float
    n_detections: int
    n_confirmed: int


@dataclass(frozen=True)
class FrameLog:
    """Ground-truth visible boxes and confirmed-track boxes for one frame."""

    frame: int
    gt_boxes: tuple[tuple[str, float, float, float, float], ...]
    track_boxes: tuple[tuple[int, float, float, float, float], ...]


@dataclass(frozen=True)
class MetricsReport:
    id_switches_on_lock: int
    tracker_id_switches_ground_truth: int
    target_loss_events: int
    collisions: int
    min_clearance_overall: float
    final_distance_to_target: float
    completed: bool
    path_length: float
    steps_run: int

    def to_text(self) -> str:
        """One key=value per line, keys in declaration order."""
        lines = [
            f"id_switches_on_lock={self.id_switches_on_lock}",
            f"tracker_id_switches_ground_truth={self.tracker_id_switches_ground_truth}",
            f"target_loss_events={self.target_loss_events}",
            f"collisions={self.collisions}",
            f"min_clearance_overall={self.min_clearance_overall:.6f}",
            f"final_distance_to_target={self.final_distance_to_target:.6f}",
            f"completed={'true' if self.completed else 'false'}",
            f"path_length={self.path_length:.6f}",
            f"steps_run={self.steps_run}",
        ]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunResult:
    ticks: tuple[TickRecord, ...]
    metrics: MetricsReport
    frame_logs: tuple[FrameLog, ...]


def validate_config(config: ScenarioConfig) -> None:
    """Raise ConfigError on the first invalid field."""
    if config.dt <= 0:
        raise ConfigError("dt", "must be positive")
    if config.max_steps <= 0:
        raise ConfigError("max_steps", "must be positive")
    min_x, min_y, max_x, max_y = config.bounds
    if not (min_x < max_x and min_y < max_y):
        raise ConfigError("world.bounds", "must span a non-empty rectangle")

    def inside(point) -> bool:
        return min_x <= point[0] <= max_x and min_y <= point[1] <= max_y

    seen: set[str] = set()
    for i, ped in enumerate(config.pedestrians):
        if ped.id in seen:
            raise ConfigError(f"pedestrians[{i}].id", f"duplicate id {ped.id!r}")
        seen.add(ped.id)
        if not inside(ped.position):
            raise ConfigError(f"pedestrians[{i}].position", "outside world bounds")
        for j, wp in enumerate(ped.waypoints):
            if not inside(wp):
                raise ConfigError(f"pedestrians[{i}].waypoints[{j}]", "outside world bounds")
    if config.pedestrians:
        if config.target_id is None:
            raise ConfigError("target_id", "required when pedestrians are present")
        if config.target_id not in seen:
            raise ConfigError("target_id", f"no pedestrian with id {config.target_id!r}")
    elif config.target_id is not None:
        raise ConfigError("target_id", "set but there are no pedestrians")


def _find_target(pedestrians, target_id):
    for p in pedestrians:
        if p.id == target_id:
            return p
    return None


def run_detailed(config: ScenarioConfig) -> RunResult:
    """Run a scenario and return ticks, metrics, and per-frame logs."""
    validate_config(config)
    noise = replace(config.noise, rng_seed=config.rng_seed)
    tracker = Tracker(config.tracker)
    lock = TargetLock()
    robot = config.robot
    peds = list(config.pedestrians)
    goal_world: tuple[float, float] | None = None
    locked_source: str | None = None
    prev_lock_id: int | None = None

    ticks: list[TickRecord] = []
    frame_logs: list[FrameLog] = []
    id_changes = 0
    losses = 0
    collisions = 0
    min_clear = math.inf
    path_length = 0.0
    reached_goal = False

    for frame in range(config.max_steps):
        t = frame * config.dt
        peds = [
            advance_pedestrian(p, config.dt) if p.spawn_time <= t + 1e-9 else p
            for p in peds
        ]
        world = WorldState(time=t, robot=robot, pedestrians=tuple(peds),
                           shelves=config.shelves, bounds=config.bounds)

        dets_true = project(world, config.camera, noise.feature_dim)
        dets_visible = apply_occlusion(dets_true, world, config.camera,
                                       config.occlusion_fraction)
        dets = corrupt(dets_visible, noise, frame)
        result = tracker.step(dets)
        confirmed_ids = {view.id for view in result.confirmed_tracks}

        if lock.state is LockState.UNLOCKED:
            observations = [
                TrackObservation(track_id, dets[di].u_center, dets[di].width_px,
                                 dets[di].height_px, dets[di].depth)
                for track_id, di in result.assignments if track_id in confirmed_ids
            ]
            candidate = acquire_target(observations, config.camera.image_width)
            if candidate.state is LockState.LOCKED:
                if prev_lock_id is not None and candidate.locked_track_id != prev_lock_id:
                    id_changes += 1
                prev_lock_id = candidate.locked_track_id
                lock = candidate
        else:
            new_lock = update_lock(lock, result, dets, config.follow)
            if new_lock.state is LockState.UNLOCKED:
                losses += 1
            elif new_lock.state is LockState.LOCKED and new_lock.locked_track_id != prev_lock_id:
                id_changes += 1
                prev_lock_id = new_lock.locked_track_id
            lock = new_lock

        if lock.state is LockState.LOCKED:
            goal_world = backproject(config.camera, robot.pose,
                                     lock.last_box[0], lock.last_depth)
            di = dict(result.assignments).get(lock.locked_track_id)
            if di is not None and dets[di].source_id is not None:
                locked_source = dets[di].source_id
            turn = steer(lock.last_box[0], config.camera.image_width, config.follow)
            cmd = follow_command(lock, config.follow, turn, robot.max_speed)
        else:
            cmd = CommandTwist(0.0, 0.0)

        if lock.state is not LockState.UNLOCKED and goal_world is not None:
            forces = total_force(world, goal_world, locked_source, config.apf)
            apf_cmd = force_to_twist(forces.resultant, robot.pose.theta, config.apf, robot)
            cmd = blend(cmd, apf_cmd, forces.nearest_obstacle_distance, config.apf)

        v, omega = robot.clamp_command(cmd.v, cmd.omega)
        new_pose = step_unicycle(robot.pose, v, omega, config.dt)
        path_length += math.hypot(new_pose.x - robot.pose.x, new_pose.y - robot.pose.y)
        robot = replace(robot, pose=new_pose)

        t_after = (frame + 1) * config.dt
        world_after = WorldState(time=t_after, robot=robot, pedestrians=tuple(peds),
                                 shelves=config.shelves, bounds=config.bounds)
        report = check_collision(world_after)
        if report.shelf_collision or report.pedestrian_collision:
            collisions += 1
        min_clear = min(min_clear, report.min_clearance)

        frame_logs.append(FrameLog(
            frame=frame,
            gt_boxes=tuple(
                (d.source_id, d.u_center, d.v_center, d.width_px, d.height_px)
                for d in dets_visible if d.source_id is not None
            ),
            track_boxes=tuple(
                (view.id, *view.box) for view in result.confirmed_tracks
            ),
        ))
        ticks.append(TickRecord(
            t=t_after,
            robot_x=robot.pose.x,
            robot_y=robot.pose.y,
            robot_theta=robot.pose.theta,
            pedestrians=tuple(
                (p.id, p.position[0], p.position[1])
                for p in peds if p.spawn_time <= t + 1e-9
            ),
            lock_id=lock.locked_track_id if lock.state is not LockState.UNLOCKED else None,
            cmd_v=v,
            cmd_omega=omega,
            min_clearance=report.min_clearance,
            n_detections=len(dets),
            n_confirmed=len(result.confirmed_tracks),
        ))

        target = _find_target(peds, config.target_id)
        if (target is not None and target.spawn_time <= t + 1e-9
                and target.reached_final_waypoint() and lock.state is LockState.LOCKED):
            dist = math.hypot(robot.pose.x - target.position[0],
                              robot.pose.y - target.position[1])
            if dist <= config.apf.goal_radius:
                reached_goal = True
                break

    target = _find_target(peds, config.target_id)
    if target is not None:
        final_distance = math.hypot(robot.pose.x - target.position[0],
                                    robot.pose.y - target.position[1])
    else:
        final_distance = math.nan

    metrics = MetricsReport(
        id_switches_on_lock=id_changes,
        tracker_id_switches_ground_truth=ground_truth_id_switches(frame_logs),
        target_loss_events=losses,
        collisions=collisions,
        min_clearance_overall=min_clear,
        final_distance_to_target=final_distance,
        completed=reached_goal and collisions == 0 and lock.state is LockState.LOCKED,
        path_length=path_length,
        steps_run=len(ticks),
    )
    return RunResult(tuple(ticks), metrics, tuple(frame_logs))


def run(config: ScenarioConfig) -> tuple[list[TickRecord], MetricsReport]:
    result = run_detailed(config)
    return list(result.ticks), result.metrics


def attribute_tracks(frame_logs, iou_floor: float = 0.1) -> dict[str, list[tuple[int, int]]]:
    """Per-frame track attribution for each ground-truth pedestrian.

    For every frame where a pedestrian has a visible box, the confirmed
    track with the highest IoU (at least iou_floor) is recorded as
    (frame, track_id).
    """
    attribution: dict[str, list[tuple[int, int]]] = {}
    for log in frame_logs:
        for ped_id, *gt_box in log.gt_boxes:
            best_iou = iou_floor
            best_track = None
            for track_id, *track_box in log.track_boxes:
                value = iou(gt_box, track_box)
                if value > best_iou:
                    best_iou = value
                    best_track = track_id
            if best_track is None:
                continue
            attribution.setdefault(ped_id, []).append((log.frame, best_track))
    return attribution


def ground_truth_id_switches(frame_logs, iou_floor: float = 0.1) -> int:
    """Count frames where a pedestrian's attributed track id changes."""
    switches = 0
    for entries in attribute_tracks(frame_logs, iou_floor).values():
        for (_, prev_id), (_, cur_id) in zip(entries, entries[1:]):
            if cur_id != prev_id:
                switches += 1
    return switches


def longest_stable_attribution(frame_logs, iou_floor: float = 0.1) -> dict[str, int]:
    """Longest frame span over which each pedestrian kept one track id.

    A span runs from the first to the last frame of a maximal
    constant-id attribution run; frames without attribution (full
    occlusion) do not break a span unless the id changed across them.
    """
    spans: dict[str, int] = {}
    for ped_id, entries in attribute_tracks(frame_logs, iou_floor).items():
        best = 0
        start_frame, current_id = entries[0]
        last_frame = start_frame
        for frame, track_id in entries[1:]:
            if track_id != current_id:
                best = max(best, last_frame - start_frame + 1)
                start_frame, current_id = frame, track_id
            last_frame = frame
        spans[ped_id] = max(best, last_frame - start_frame + 1)
    return spans
