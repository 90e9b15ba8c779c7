"""Synthetic forward-looking RGB-D camera.

Replaces a CNN person detector with an exact pinhole projection of the
world: each visible pedestrian becomes an image-space bounding box with a
direct depth readout and a hashed appearance feature. Occlusion is a 1D
horizontal-interval model, noise is drawn from counter-based streams so
whole runs replay bit-identically, and per-frame detections round-trip
through a CSV detection log for offline tracker runs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .world import Pose2D, WorldState, clearance

DEFAULT_FEATURE_DIM = 16
DEFAULT_OCCLUSION_FRACTION = 0.6

_SEED_MASK = 0xFFFFFFFFFFFFFFFF
_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera fixed to the robot, optical axis along its heading."""

    focal_px: float = 500.0
    image_width: int = 640
    image_height: int = 480
    max_depth: float = 10.0  # m

    def __post_init__(self) -> None:
        if self.focal_px <= 0 or self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("camera intrinsics must be positive")
        if self.max_depth <= 0:
            raise ValueError("max_depth must be positive")

    @property
    def horizontal_fov(self) -> float:
        """Full horizontal field of view in radians."""
        return 2.0 * math.atan(self.image_width / (2.0 * self.focal_px))


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise model applied to detections.

    All randomness is keyed on (rng_seed, frame, pedestrian id), so one
    pedestrian's draws never depend on who else is in the scene.
    """

    pixel_sigma: float = 0.0  # px, on box center and size
    depth_sigma: float = 0.0  # m
    feature_sigma: float = 0.0
    miss_rate: float = 0.0  # probability a detection is dropped
    rng_seed: int = 0
    feature_dim: int = DEFAULT_FEATURE_DIM

    def __post_init__(self) -> None:
        if min(self.pixel_sigma, self.depth_sigma, self.feature_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must be in [0, 1]")
        if self.feature_dim <= 0:
            raise ValueError("feature_dim must be positive")


@dataclass(frozen=True)
class Detection:
    """One bounding box with depth and appearance feature.

    source_id is provenance only (which pedestrian produced the box); the
    tracker never reads it.
    """

    u_center: float  # px
    v_center: float  # px
    width_px: float
    height_px: float
    depth: float  # m
    confidence: float
    feature: tuple[float, ...]
    source_id: str | None = None

    def interval(self) -> tuple[float, float]:
        half = self.width_px / 2.0
        return (self.u_center - half, self.u_center + half)


class DetlogError(ValueError):
    """Malformed detection-log content; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _det_order(d: Detection):
    return (d.u_center, d.depth, d.source_id or "")


def _id_entropy(key: str) -> int:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _stream(noise: NoiseSpec, frame: int, key: str, salt: int) -> np.random.Generator:
    return np.random.default_rng(
        [noise.rng_seed & _SEED_MASK, int(frame), _id_entropy(key), salt]
    )


def base_feature(pedestrian_id: str, dim: int = DEFAULT_FEATURE_DIM) -> tuple[float, ...]:
    """Deterministic unit vector derived from the pedestrian id."""
    rng = np.random.default_rng(_id_entropy(pedestrian_id))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return tuple(float(x) for x in vec)


def synth_feature(pedestrian_id: str, noise: NoiseSpec, frame: int) -> tuple[float, ...]:
    """Appearance feature for one pedestrian at one frame: base vector plus noise."""
    base = base_feature(pedestrian_id, noise.feature_dim)
    if noise.feature_sigma <= 0.0:
        return base
    rng = _stream(noise, frame, pedestrian_id, 1)
    vec = np.asarray(base) + noise.feature_sigma * rng.standard_normal(noise.feature_dim)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        vec = np.zeros(noise.feature_dim)
        vec[0] = 1.0
        norm = 1.0
    return tuple(float(x) for x in vec / norm)


def _camera_frame(pose: Pose2D, point: tuple[float, float]) -> tuple[float, float]:
    """World point -> (forward, right) coordinates in the camera frame."""
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    c = math.cos(pose.theta)
    s = math.sin(pose.theta)
    return dx * c + dy * s, dx * s - dy * c


def backproject(camera: CameraModel, pose: Pose2D, u_center: float, depth: float) -> tuple[float, float]:
    """Inverse of the projection: image column + depth -> ground position."""
    right = depth * (u_center - camera.image_width / 2.0) / camera.focal_px
    c = math.cos(pose.theta)
    s = math.sin(pose.theta)
    return (pose.x + depth * c + right * s, pose.y + depth * s - right * c)


def project(world: WorldState, camera: CameraModel,
            feature_dim: int = DEFAULT_FEATURE_DIM) -> list[Detection]:
    """Noise-free detections for every pedestrian inside the view frustum.

    Boxes are clipped to the image; pedestrians behind the camera or past
    max_depth are omitted. Output is sorted by (u, depth).
    """
    w_img = float(camera.image_width)
    h_img = float(camera.image_height)
    dets: list[Detection] = []
    for ped in world.active_pedestrians():
        forward, right = _camera_frame(world.robot.pose, ped.position)
        if forward <= 1e-9 or forward > camera.max_depth:
            continue
        u = w_img / 2.0 + camera.focal_px * right / forward
        w_px = camera.focal_px * ped.shoulder_width / forward
        h_px = camera.focal_px * ped.height / forward
        u0 = max(u - w_px / 2.0, 0.0)
        u1 = min(u + w_px / 2.0, w_img)
        if u1 - u0 <= 1e-9:
            continue
        v0 = max(h_img / 2.0 - h_px / 2.0, 0.0)
        v1 = min(h_img / 2.0 + h_px / 2.0, h_img)
        dets.append(Detection(
            u_center=(u0 + u1) / 2.0,
            v_center=(v0 + v1) / 2.0,
            width_px=u1 - u0,
            height_px=v1 - v0,
            depth=forward,
            confidence=1.0,
            feature=base_feature(ped.id, feature_dim),
            source_id=ped.id,
        ))
    dets.sort(key=_det_order)
    return dets


def _shelf_silhouette(shelf, pose: Pose2D, camera: CameraModel) -> tuple[float, float] | None:
    """Horizontal image interval blocked by a shelf, or None if off-screen."""
    corners = (
        (shelf.min_x, shelf.min_y),
        (shelf.min_x, shelf.max_y),
        (shelf.max_x, shelf.min_y),
        (shelf.max_x, shelf.max_y),
    )
    angles = []
    any_in_front = False
    for corner in corners:
        forward, right = _camera_frame(pose, corner)
        if forward > 0.0:
            any_in_front = True
        angles.append(math.atan2(right, forward))
    if not any_in_front:
        return None
    # Minimal arc covering all corner bearings: the complement of the
    # largest circular gap between consecutive sorted angles.
    angles.sort()
    gaps = [angles[i + 1] - angles[i] for i in range(3)]
    gaps.append(angles[0] + 2.0 * math.pi - angles[3])
    k = max(range(4), key=lambda i: gaps[i])
    width = 2.0 * math.pi - gaps[k]
    if width >= math.pi:
        # Camera level with or inside the footprint; treat as a full block.
        return (0.0, float(camera.image_width))
    lo = angles[(k + 1) % 4]
    hi = lo + width
    if lo >= _HALF_PI or hi <= -_HALF_PI:
        return None
    w_img = float(camera.image_width)
    half_w = w_img / 2.0
    if lo <= -_HALF_PI:
        ua = 0.0
    else:
        ua = min(max(half_w + camera.focal_px * math.tan(lo), 0.0), w_img)
    if hi >= _HALF_PI:
        ub = w_img
    else:
        ub = min(max(half_w + camera.focal_px * math.tan(hi), 0.0), w_img)
    if ub - ua <= 1e-9:
        return None
    return (ua, ub)


def _subtract_segments(interval: tuple[float, float],
                       segments: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Visible pieces of interval after removing the union of segments."""
    pieces = [interval]
    for s0, s1 in segments:
        nxt: list[tuple[float, float]] = []
        for p0, p1 in pieces:
            a = max(p0, s0)
            b = min(p1, s1)
            if b <= a:
                nxt.append((p0, p1))
                continue
            if a - p0 > 1e-12:
                nxt.append((p0, a))
            if p1 - b > 1e-12:
                nxt.append((b, p1))
        pieces = nxt
        if not pieces:
            break
    return pieces


def apply_occlusion(detections, world: WorldState, camera: CameraModel,
                    occlusion_fraction: float = DEFAULT_OCCLUSION_FRACTION) -> list[Detection]:
    """Suppress or shrink detections hidden behind nearer bodies or shelves.

    A detection is dropped when occluders cover strictly more than
    occlusion_fraction of its horizontal interval; coverage at or below
    the fraction shrinks the box to its largest visible piece. The result
    does not depend on input ordering.
    """
    if not detections:
        return []
    pose = world.robot.pose
    cam_xy = pose.position()
    shelf_occluders = []
    for shelf in world.shelves:
        sil = _shelf_silhouette(shelf, pose, camera)
        if sil is not None:
            shelf_occluders.append((clearance(cam_xy, [shelf]), sil))
    out: list[Detection] = []
    for det in detections:
        i0, i1 = det.interval()
        segments = [other.interval() for other in detections
                    if other is not det and other.depth < det.depth - 1e-9]
        segments += [sil for dist, sil in shelf_occluders if dist < det.depth - 1e-9]
        pieces = _subtract_segments((i0, i1), segments)
        visible = sum(b - a for a, b in pieces)
        covered = (i1 - i0) - visible
        if covered <= 1e-12:
            out.append(det)
            continue
        if covered / (i1 - i0) > occlusion_fraction:
            continue
        a, b = max(pieces, key=lambda p: (p[1] - p[0], -p[0]))
        out.append(replace(det, u_center=(a + b) / 2.0, width_px=b - a))
    out.sort(key=_det_order)
    return out


def corrupt(detections, noise: NoiseSpec, frame: int) -> list[Detection]:
    """Apply seeded Gaussian noise and random misses to detections.

    Each detection's draws come from its own (seed, frame, id) stream, so
    adding or removing one pedestrian never changes another's noise.
    """
    out: list[Detection] = []
    for idx, det in enumerate(detections):
        key = det.source_id if det.source_id is not None else f"det{idx}"
        rng = _stream(noise, frame, key, 0)
        du, dv, dw, dh = rng.standard_normal(4) * noise.pixel_sigma
        ddepth = rng.standard_normal() * noise.depth_sigma
        missed = rng.uniform() < noise.miss_rate
        if missed:
            continue
        feature = det.feature
        if noise.feature_sigma > 0.0:
            if det.source_id is not None:
                feature = synth_feature(det.source_id, noise, frame)
            else:
                vec = np.asarray(det.feature) + noise.feature_sigma * _stream(
                    noise, frame, key, 1).standard_normal(len(det.feature))
                feature = tuple(float(x) for x in vec / max(np.linalg.norm(vec), 1e-12))
        out.append(replace(
            det,
            u_center=max(det.u_center + du, 0.0),
            v_center=max(det.v_center + dv, 0.0),
            width_px=max(det.width_px + dw, 1e-3),
            height_px=max(det.height_px + dh, 1e-3),
            depth=max(det.depth + ddepth, 1e-3),
            feature=feature,
        ))
    out.sort(key=_det_order)
    return out


def write_detlog(path, frames, feature_dim: int | None = None) -> None:
    """Write per-frame detections as CSV.

    Header is frame,u,v,w,h,depth,conf,f0..f{D-1} with a trailing gt
    column when any detection carries provenance; floats use 6 decimals
    and rows are sorted by (frame, u).
    """
    dim = feature_dim
    include_gt = False
    for frame_dets in frames:
        for det in frame_dets:
            if dim is None:
                dim = len(det.feature)
            if det.source_id is not None:
                include_gt = True
    if dim is None:
        dim = DEFAULT_FEATURE_DIM
    header = ["frame", "u", "v", "w", "h", "depth", "conf"]
    header += [f"f{i}" for i in range(dim)]
    if include_gt:
        header.append("gt")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for frame, frame_dets in enumerate(frames):
            for det in sorted(frame_dets, key=_det_order):
                fields = [str(frame)]
                fields += [f"{x:.6f}" for x in (det.u_center, det.v_center, det.width_px,
                                                det.height_px, det.depth, det.confidence)]
                fields += [f"{x:.6f}" for x in det.feature]
                if include_gt:
                    fields.append(det.source_id or "")
                fh.write(",".join(fields) + "\n")


def read_detlog(path) -> list[list[Detection]]:
    """Read a detection log back into per-frame detection lists.

    Frames with no rows come back as empty lists. Raises DetlogError with
    the 1-based line number on malformed content.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DetlogError("empty file: missing header", line=1)
    header = lines[0].split(",")
    fixed = ["frame", "u", "v", "w", "h", "depth", "conf"]
    if header[: len(fixed)] != fixed:
        raise DetlogError(f"bad header: expected columns {','.join(fixed)},f0..", line=1)
    rest = header[len(fixed):]
    has_gt = bool(rest) and rest[-1] == "gt"
    feature_cols = rest[:-1] if has_gt else rest
    if feature_cols != [f"f{i}" for i in range(len(feature_cols))]:
        raise DetlogError("bad header: feature columns must be f0..f{D-1}", line=1)
    dim = len(feature_cols)
    n_cols = len(header)
    frames: dict[int, list[Detection]] = {}
    max_frame = -1
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DetlogError(f"expected {n_cols} fields, got {len(parts)}", line=line_no)
        try:
            frame = int(parts[0])
            values = [float(x) for x in parts[1 : 7 + dim]]
        except ValueError as exc:
            raise DetlogError(f"malformed numeric field: {exc}", line=line_no) from None
        if frame < 0:
            raise DetlogError("frame numbers must be non-negative", line=line_no)
        source = parts[7 + dim] if has_gt else None
        det = Detection(
            u_center=values[0], v_center=values[1], width_px=values[2],
            height_px=values[3], depth=values[4], confidence=values[5],
            feature=tuple(values[6:]), source_id=source or None,
        )
        frames.setdefault(frame, []).append(det)
        max_frame = max(max_frame, frame)
    return [frames.get(i, []) for i in range(max_frame + 1)]
