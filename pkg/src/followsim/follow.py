"""Target lock management and the person-following controller.

A lock binds the robot to one track id. While the track keeps matching,
the controller steers with a fixed-rate bang-bang rule around a pixel
deadband and regulates distance with a deadbanded proportional speed law.
If the track drops out, a width-plus-position gate tries to re-adopt the
person under whatever new id the tracker produced; the robot holds still
while searching and gives up after a patience budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum


class TurnDirection(Enum):
    LEFT = "left"
    STRAIGHT = "straight"
    RIGHT = "right"


class LockState(Enum):
    UNLOCKED = "unlocked"
    LOCKED = "locked"
    SEARCHING = "searching"


@dataclass(frozen=True)
class FollowParams:
    center_deadband: float = 20.0  # px
    desired_distance: float = 1.5  # m
    distance_deadband: float = 0.2  # m
    k_linear: float = 0.9  # (m/s) per m of range error
    turn_rate: float = 1.2  # rad/s
    width_tolerance: float = 0.3  # fraction of last seen width
    center_tolerance: float = 80.0  # px
    search_patience: int = 30  # frames

    def __post_init__(self) -> None:
        if self.center_deadband <= 0 or self.desired_distance <= 0:
            raise ValueError("center_deadband and desired_distance must be positive")
        if self.width_tolerance <= 0 or self.center_tolerance <= 0:
            raise ValueError("reacquisition tolerances must be positive")


@dataclass(frozen=True)
class CommandTwist:
    """Forward speed and turn rate sent to the plant. Positive omega turns left."""

    v: float = 0.0  # m/s
    omega: float = 0.0  # rad/s


@dataclass(frozen=True)
class TargetLock:
    state: LockState = LockState.UNLOCKED
    locked_track_id: int | None = None
    last_box: tuple[float, float, float] | None = None  # (u_center, width_px, height_px)
    last_depth: float | None = None
    frames_lost: int = 0


@dataclass(frozen=True)
class TrackObservation:
    """A confirmed track paired with its current-frame measurement."""

    track_id: int
    u_center: float
    width_px: float
    height_px: float
    depth: float


def acquire_target(observations, image_width: float) -> TargetLock:
    """Lock onto the confirmed track nearest the image center.

    Ties go to the smaller track id; with no candidates the lock stays
    unlocked.
    """
    if not observations:
        return TargetLock()
    center = image_width / 2.0
    best = min(observations, key=lambda o: (abs(o.u_center - center), o.track_id))
    return TargetLock(
        state=LockState.LOCKED,
        locked_track_id=best.track_id,
        last_box=(best.u_center, best.width_px, best.height_px),
        last_depth=best.depth,
        frames_lost=0,
    )


def steer(u_center: float, image_width: float, params: FollowParams) -> TurnDirection:
    """Bang-bang heading correction around a pixel deadband.

    Offsets exactly at the deadband count as centered, so the controller
    never chatters at the threshold.
    """
    error = u_center - image_width / 2.0
    if error < -params.center_deadband:
        return TurnDirection.LEFT
    if error > params.center_deadband:
        return TurnDirection.RIGHT
    return TurnDirection.STRAIGHT


def speed(depth: float, params: FollowParams, max_speed: float = math.inf) -> float:
    """Proportional approach speed, zero inside the distance deadband.

    The robot never reverses: the result is clamped to [0, max_speed].
    """
    if depth <= params.desired_distance + params.distance_deadband:
        return 0.0
    return min(max(params.k_linear * (depth - params.desired_distance), 0.0), max_speed)


def update_lock(lock: TargetLock, frame_result, detections, params: FollowParams) -> TargetLock:
    """Refresh the lock from this frame's tracker output.

    If the locked id matched, refresh the reference box and depth. If not,
    search among confirmed tracks matched this frame for the candidate
    whose box width is closest to the last seen width, subject to a width
    ratio within width_tolerance and a horizontal shift within
    center_tolerance; a hit adopts that track's id. After
    search_patience missed frames the lock is abandoned.
    """
    if lock.state is LockState.UNLOCKED or lock.locked_track_id is None:
        return lock
    assigned = dict(frame_result.assignments)
    di = assigned.get(lock.locked_track_id)
    if di is not None:
        det = detections[di]
        return TargetLock(
            state=LockState.LOCKED,
            locked_track_id=lock.locked_track_id,
            last_box=(det.u_center, det.width_px, det.height_px),
            last_depth=det.depth,
            frames_lost=0,
        )
    frames_lost = lock.frames_lost + 1
    last_u, last_w, _ = lock.last_box
    confirmed_ids = {view.id for view in frame_result.confirmed_tracks}
    best_key = None
    best = None
    for track_id, det_idx in frame_result.assignments:
        if track_id not in confirmed_ids:
            continue
        det = detections[det_idx]
        ratio = abs(det.width_px - last_w) / last_w
        if ratio > params.width_tolerance:
            continue
        if abs(det.u_center - last_u) > params.center_tolerance:
            continue
        key = (ratio, track_id)
        if best_key is None or key < best_key:
            best_key = key
            best = (track_id, det)
    if best is not None:
        track_id, det = best
        return TargetLock(
            state=LockState.LOCKED,
            locked_track_id=track_id,
            last_box=(det.u_center, det.width_px, det.height_px),
            last_depth=det.depth,
            frames_lost=0,
        )
    if frames_lost > params.search_patience:
        return TargetLock()
    return replace(lock, state=LockState.SEARCHING, frames_lost=frames_lost)


def follow_command(lock: TargetLock, params: FollowParams, turn: TurnDirection,
                   max_speed: float = math.inf) -> CommandTwist:
    """Following command for the current lock state; hold still unless locked."""
    if lock.state is not LockState.LOCKED or lock.last_depth is None:
        return CommandTwist(0.0, 0.0)
    v = speed(lock.last_depth, params, max_speed)
    if turn is TurnDirection.LEFT:
        omega = params.turn_rate
    elif turn is TurnDirection.RIGHT:
        omega = -params.turn_rate
    else:
        omega = 0.0
    return CommandTwist(v, omega)
