"""Tracking by detection with appearance-aided association.

Each track runs a constant-velocity Kalman filter on box center, aspect
ratio and height. Candidate pairs are hard-gated by squared Mahalanobis
distance in measurement space, scored by minimum cosine distance against
a bounded appearance gallery, and matched in cascade order of track
staleness; tentative and freshly-missed tracks get an IoU fallback.
Track IDs count up from 1 and are never reused within a tracker instance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

INFEASIBLE = np.inf

# Motion and measurement noise expressed as fractions of box height.
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160

_F = np.eye(8)
_F[:4, 4:] = np.eye(4)


class DegenerateCovarianceError(RuntimeError):
    """Innovation covariance was not positive definite."""


class EmptyGalleryError(ValueError):
    """Appearance cost requested for a track with no gallery entries."""


class TrackStage(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class TrackerParams:
    """Association and lifecycle parameters.

    gating_threshold is the 0.95 chi-square quantile for the 4-dim
    measurement; lambda_motion blends gate distance into the appearance
    cost (0 keeps motion as a hard gate only).
    """

    n_init: int = 3
    max_age: int = 30
    gating_threshold: float = 9.4877
    appearance_threshold: float = 0.4
    lambda_motion: float = 0.0
    iou_threshold: float = 0.3
    gallery_size: int = 50
    process_noise_scale: float = 1.0
    measurement_noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if min(self.n_init, self.max_age, self.gallery_size) <= 0:
            raise ValueError("n_init, max_age and gallery_size must be positive")
        if min(self.gating_threshold, self.appearance_threshold, self.iou_threshold) <= 0:
            raise ValueError("thresholds must be positive")
        if not 0.0 <= self.lambda_motion <= 1.0:
            raise ValueError("lambda_motion must be in [0, 1]")


@dataclass(eq=False)
class KalmanState:
    """Gaussian belief over (u, v, gamma, h) and their per-frame velocities."""

    mean: np.ndarray  # (8,)
    covariance: np.ndarray  # (8, 8)


@dataclass(eq=False)
class Track:
    id: int
    state: KalmanState
    stage: TrackStage = TrackStage.TENTATIVE
    hits: int = 1
    age: int = 0
    time_since_update: int = 0
    gallery: deque = field(default_factory=deque)

    def to_box(self) -> tuple[float, float, float, float]:
        """Current box estimate as (u_center, v_center, width, height)."""
        u, v, gamma, h = self.state.mean[:4]
        return (float(u), float(v), float(gamma * h), float(h))


@dataclass(frozen=True)
class TrackView:
    """Read-only per-frame snapshot of one confirmed track."""

    id: int
    box: tuple[float, float, float, float]  # predicted (u, v, w, h)
    time_since_update: int


@dataclass(frozen=True)
class FrameResult:
    assignments: tuple[tuple[int, int], ...]  # (track id, detection index)
    new_track_ids: tuple[int, ...]
    deleted_track_ids: tuple[int, ...]
    confirmed_tracks: tuple[TrackView, ...]


def measurement_from_box(u: float, v: float, w: float, h: float) -> np.ndarray:
    return np.array([u, v, w / h, h], dtype=float)


def measurement_from_detection(det) -> np.ndarray:
    return measurement_from_box(det.u_center, det.v_center, det.width_px, det.height_px)


def _process_noise(mean: np.ndarray, params: TrackerParams) -> np.ndarray:
    h = max(abs(float(mean[3])), 1e-3)
    s = params.process_noise_scale
    std = np.array([
        STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h,
    ]) * s
    return np.diag(std ** 2)


def _measurement_noise(mean: np.ndarray, params: TrackerParams) -> np.ndarray:
    h = max(abs(float(mean[3])), 1e-3)
    s = params.measurement_noise_scale
    std = np.array([
        STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h,
    ]) * s
    return np.diag(std ** 2)


def kf_initiate(measurement: np.ndarray, params: TrackerParams) -> KalmanState:
    """New filter state centered on a measurement with zero velocity."""
    m = np.asarray(measurement, dtype=float)
    mean = np.concatenate([m, np.zeros(4)])
    h = max(abs(float(m[3])), 1e-3)
    std = np.array([
        2 * STD_WEIGHT_POSITION * h, 2 * STD_WEIGHT_POSITION * h, 1e-2,
        2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h, 10 * STD_WEIGHT_VELOCITY * h, 1e-5,
        10 * STD_WEIGHT_VELOCITY * h,
    ])
    return KalmanState(mean, np.diag(std ** 2))


def kf_predict(state: KalmanState, params: TrackerParams) -> KalmanState:
    """One constant-velocity prediction step."""
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + _process_noise(state.mean, params)
    return KalmanState(mean, (cov + cov.T) / 2.0)


def kf_project(state: KalmanState, params: TrackerParams) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement distribution (mean, innovation covariance)."""
    mean = state.mean[:4].copy()
    cov = state.covariance[:4, :4] + _measurement_noise(state.mean, params)
    return mean, cov


def _cholesky(matrix: np.ndarray):
    if not np.all(np.isfinite(matrix)):
        raise DegenerateCovarianceError("covariance contains non-finite entries")
    try:
        return scipy.linalg.cho_factor(matrix, lower=True, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateCovarianceError(f"innovation covariance not invertible: {exc}") from None


def kf_update(state: KalmanState, measurement: np.ndarray, params: TrackerParams) -> KalmanState:
    """Kalman correction with a box measurement; keeps the covariance PSD."""
    z = np.asarray(measurement, dtype=float)
    projected_mean, innovation_cov = kf_project(state, params)
    chol = _cholesky(innovation_cov)
    gain = scipy.linalg.cho_solve(chol, state.covariance[:, :4].T, check_finite=False).T
    mean = state.mean + gain @ (z - projected_mean)
    i_kh = np.eye(8)
    i_kh[:, :4] -= gain
    r = _measurement_noise(state.mean, params)
    cov = i_kh @ state.covariance @ i_kh.T + gain @ r @ gain.T
    return KalmanState(mean, (cov + cov.T) / 2.0)


def squared_mahalanobis(mean: np.ndarray, cov: np.ndarray, measurement: np.ndarray) -> float:
    """Squared Mahalanobis distance of a measurement from N(mean, cov)."""
    chol = _cholesky(np.asarray(cov, dtype=float))
    y = np.asarray(measurement, dtype=float) - np.asarray(mean, dtype=float)
    x = scipy.linalg.solve_triangular(chol[0], y, lower=True, check_finite=False)
    return float(x @ x)


def gate(state: KalmanState, measurement: np.ndarray, params: TrackerParams) -> tuple[bool, float]:
    """Motion gate: passes iff the squared Mahalanobis distance is in bounds."""
    projected_mean, innovation_cov = kf_project(state, params)
    d = squared_mahalanobis(projected_mean, innovation_cov, measurement)
    return d <= params.gating_threshold, d


def appearance_cost(track: Track, feature) -> float:
    """Minimum cosine distance from a feature to the track's gallery."""
    if not track.gallery:
        raise EmptyGalleryError(f"track {track.id} has no appearance gallery")
    gallery = np.asarray(track.gallery, dtype=float)
    return float(np.min(1.0 - gallery @ np.asarray(feature, dtype=float)))


def iou(box_a, box_b) -> float:
    """IoU of two (u_center, v_center, w, h) boxes."""
    ax0, ay0 = box_a[0] - box_a[2] / 2.0, box_a[1] - box_a[3] / 2.0
    ax1, ay1 = box_a[0] + box_a[2] / 2.0, box_a[1] + box_a[3] / 2.0
    bx0, by0 = box_b[0] - box_b[2] / 2.0, box_b[1] - box_b[3] / 2.0
    bx1, by1 = box_b[0] + box_b[2] / 2.0, box_b[1] + box_b[3] / 2.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = box_a[2] * box_a[3] + box_b[2] * box_b[3] - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def solve_assignment(cost_matrix, infeasible_marker: float = INFEASIBLE) -> list[tuple[int, int]]:
    """Minimum-cost matching over feasible cells only.

    Cells equal to the marker can never be selected; among all feasible
    matchings of maximum cardinality the cheapest one is returned. The
    marker-aware reduction shifts feasible costs below zero by a constant
    large enough that cardinality always dominates cost.
    """
    cost = np.atleast_2d(np.asarray(cost_matrix, dtype=float))
    if cost.size == 0:
        return []
    if np.isinf(infeasible_marker):
        feasible = ~np.isinf(cost)
    else:
        feasible = cost != infeasible_marker
    if not feasible.any():
        return []
    if feasible.all():
        rows, cols = linear_sum_assignment(cost)
        return list(zip(rows.tolist(), cols.tolist()))
    n = min(cost.shape)
    span = float(np.max(np.abs(cost[feasible])))
    shift = 1.0 + 2.0 * n * max(1.0, span)
    work = np.zeros_like(cost)
    work[feasible] = cost[feasible] - shift
    rows, cols = linear_sum_assignment(work)
    return [(r, c) for r, c in zip(rows.tolist(), cols.tolist()) if feasible[r, c]]


def cascade_match(tracks, detections, params: TrackerParams):
    """Associate detections to tracks.

    Confirmed tracks compete tier by tier in increasing time_since_update
    using appearance cost under the motion gate; leftovers (tentative
    tracks plus confirmed tracks missed exactly once) fall back to IoU.

    Returns (matches, unmatched_track_indices, unmatched_detection_indices)
    with matches as (track index, detection index) pairs.
    """
    matches: list[tuple[int, int]] = []
    matched_tracks: set[int] = set()
    unmatched_dets = list(range(len(detections)))
    confirmed = [i for i, t in enumerate(tracks) if t.stage is TrackStage.CONFIRMED]

    measurements = [measurement_from_detection(d) for d in detections]

    for tier in range(params.max_age + 1):
        if not unmatched_dets:
            break
        tier_tracks = [i for i in confirmed if tracks[i].time_since_update == tier]
        if not tier_tracks:
            continue
        cost = np.full((len(tier_tracks), len(unmatched_dets)), INFEASIBLE)
        for r, ti in enumerate(tier_tracks):
            for c, di in enumerate(unmatched_dets):
                passes, sq = gate(tracks[ti].state, measurements[di], params)
                if not passes:
                    continue
                ac = appearance_cost(tracks[ti], detections[di].feature)
                if ac > params.appearance_threshold:
                    continue
                cost[r, c] = params.lambda_motion * sq + (1.0 - params.lambda_motion) * ac
        taken = []
        for r, c in solve_assignment(cost):
            matches.append((tier_tracks[r], unmatched_dets[c]))
            matched_tracks.add(tier_tracks[r])
            taken.append(unmatched_dets[c])
        unmatched_dets = [d for d in unmatched_dets if d not in taken]

    iou_tracks = [
        i for i, t in enumerate(tracks)
        if i not in matched_tracks and (
            t.stage is TrackStage.TENTATIVE
            or (t.stage is TrackStage.CONFIRMED and t.time_since_update == 1)
        )
    ]
    if iou_tracks and unmatched_dets:
        cost = np.full((len(iou_tracks), len(unmatched_dets)), INFEASIBLE)
        for r, ti in enumerate(iou_tracks):
            box = tracks[ti].to_box()
            for c, di in enumerate(unmatched_dets):
                det = detections[di]
                value = 1.0 - iou(box, (det.u_center, det.v_center, det.width_px, det.height_px))
                if value > 1.0 - params.iou_threshold:
                    continue
                cost[r, c] = value
        taken = []
        for r, c in solve_assignment(cost):
            matches.append((iou_tracks[r], unmatched_dets[c]))
            matched_tracks.add(iou_tracks[r])
            taken.append(unmatched_dets[c])
        unmatched_dets = [d for d in unmatched_dets if d not in taken]

    unmatched_tracks = [i for i in range(len(tracks)) if i not in matched_tracks]
    return matches, unmatched_tracks, unmatched_dets


class Tracker:
    """Stateful multi-target tracker; one instance per scenario run."""

    def __init__(self, params: TrackerParams | None = None):
        self.params = params if params is not None else TrackerParams()
        self.tracks: list[Track] = []
        self._next_id = 1

    def step(self, detections) -> FrameResult:
        """Advance one frame: predict, associate, update, manage lifecycle."""
        p = self.params
        for t in self.tracks:
            t.state = kf_predict(t.state, p)
            t.age += 1
        snapshot = tuple(
            TrackView(t.id, t.to_box(), t.time_since_update)
            for t in self.tracks if t.stage is TrackStage.CONFIRMED
        )
        matches, unmatched_tracks, unmatched_dets = cascade_match(self.tracks, detections, p)

        assignments: list[tuple[int, int]] = []
        for ti, di in matches:
            t = self.tracks[ti]
            det = detections[di]
            t.state = kf_update(t.state, measurement_from_detection(det), p)
            t.hits += 1
            t.time_since_update = 0
            t.gallery.append(np.asarray(det.feature, dtype=float))
            if t.stage is TrackStage.TENTATIVE and t.hits >= p.n_init:
                t.stage = TrackStage.CONFIRMED
            assignments.append((t.id, di))

        deleted: list[int] = []
        for ti in unmatched_tracks:
            t = self.tracks[ti]
            t.time_since_update += 1
            if t.stage is TrackStage.TENTATIVE or t.time_since_update > p.max_age:
                t.stage = TrackStage.DELETED
                deleted.append(t.id)

        new_ids: list[int] = []
        for di in unmatched_dets:
            det = detections[di]
            track = Track(
                id=self._next_id,
                state=kf_initiate(measurement_from_detection(det), p),
                gallery=deque([np.asarray(det.feature, dtype=float)], maxlen=p.gallery_size),
            )
            if p.n_init <= 1:
                track.stage = TrackStage.CONFIRMED
            self._next_id += 1
            self.tracks.append(track)
            new_ids.append(track.id)

        self.tracks = [t for t in self.tracks if t.stage is not TrackStage.DELETED]
        return FrameResult(
            assignments=tuple(assignments),
            new_track_ids=tuple(new_ids),
            deleted_track_ids=tuple(deleted),
            confirmed_tracks=snapshot,
        )
