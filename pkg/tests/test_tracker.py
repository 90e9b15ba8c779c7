"""Kalman filter, gating, assignment, cascade matching, and track lifecycle."""

import itertools
import math

import numpy as np
import pytest

from followsim.sensor import Detection, NoiseSpec, base_feature, synth_feature
from followsim.tracker import (INFEASIBLE, DegenerateCovarianceError, EmptyGalleryError,
                               FrameResult, KalmanState, Track, Tracker, TrackerParams,
                               TrackStage, appearance_cost, cascade_match, gate, iou,
                               kf_initiate, kf_predict, kf_project, kf_update,
                               measurement_from_detection, solve_assignment,
                               squared_mahalanobis)

PARAMS = TrackerParams()


def detection(u, v=240.0, w=50.0, h=170.0, depth=5.0, pid="a", feature=None):
    return Detection(u_center=u, v_center=v, width_px=w, height_px=h, depth=depth,
                     confidence=1.0, feature=feature or base_feature(pid), source_id=pid)


def chi2_cdf_4dof(x: float) -> float:
    # closed form for 4 degrees of freedom
    return 1.0 - math.exp(-x / 2.0) * (1.0 + x / 2.0)


def chi2_ppf_4dof(q: float) -> float:
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if chi2_cdf_4dof(mid) < q:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def brute_force_full(cost: np.ndarray):
    """Minimum-total-cost full matching by enumerating permutations."""
    rows, cols = cost.shape
    transposed = False
    if rows > cols:
        cost = cost.T
        rows, cols = cols, rows
        transposed = True
    best = None
    best_pairs = None
    for perm in itertools.permutations(range(cols), rows):
        total = sum(cost[r, c] for r, c in enumerate(perm))
        if best is None or total < best:
            best = total
            best_pairs = [(r, c) for r, c in enumerate(perm)]
    if transposed:
        best_pairs = [(c, r) for r, c in best_pairs]
    return best, best_pairs


def brute_force_partial(cost: np.ndarray, marker=INFEASIBLE):
    """Best (max cardinality, then min cost) feasible partial matching."""
    rows, cols = cost.shape
    feasible = [(r, c) for r in range(rows) for c in range(cols)
                if not np.isinf(cost[r, c])]
    best_card = -1
    best_cost = None
    for k in range(min(rows, cols), -1, -1):
        for combo in itertools.combinations(feasible, k):
            rs = [r for r, _ in combo]
            cs = [c for _, c in combo]
            if len(set(rs)) != k or len(set(cs)) != k:
                continue
            total = sum(cost[r, c] for r, c in combo)
            if k > best_card or (k == best_card and total < best_cost):
                best_card = k
                best_cost = total
        if best_card == k and best_card >= 0:
            break
    return best_card, best_cost


class TestKalman:
    def test_predict_constant_velocity(self):
        state = KalmanState(np.array([100.0, 50.0, 0.5, 200.0, 2.0, 0, 0, 0]),
                            np.eye(8))
        out = kf_predict(state, PARAMS)
        assert out.mean[:4] == pytest.approx([102.0, 50.0, 0.5, 200.0])
        assert out.mean[4:] == pytest.approx([2.0, 0.0, 0.0, 0.0])

    def test_predict_grows_covariance(self):
        state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), PARAMS)
        out = kf_predict(state, PARAMS)
        assert np.trace(out.covariance) > np.trace(state.covariance)
        assert out.mean[:2] == pytest.approx(state.mean[:2])  # zero velocity

    def test_two_predicts_double_velocity_displacement(self):
        rng = np.random.default_rng(2)
        mean = np.array([300.0, 200.0, 0.4, 150.0, *rng.normal(0, 3, 4)])
        state = KalmanState(mean.copy(), np.eye(8))
        twice = kf_predict(kf_predict(state, PARAMS), PARAMS)
        assert twice.mean[:4] == pytest.approx(mean[:4] + 2.0 * mean[4:])

    def test_update_zero_innovation_keeps_position(self):
        state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), PARAMS)
        state = kf_predict(state, PARAMS)
        out = kf_update(state, state.mean[:4].copy(), PARAMS)
        assert out.mean[:4] == pytest.approx(state.mean[:4])

    def test_update_tracks_measurement_as_noise_vanishes(self):
        params = TrackerParams(measurement_noise_scale=1e-6)  # R scaled by 1e-12
        state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), params)
        state = kf_predict(state, params)
        z = np.array([350.0, 260.0, 0.35, 180.0])
        out = kf_update(state, z, params)
        assert out.mean[:4] == pytest.approx(z, abs=1e-6)

    def test_repeated_pure_updates_follow_batch_fusion_oracle(self):
        # Without predicts, k identical updates equal one batch fusion of k
        # measurements. Initial position variance is (2*w*h)^2 against
        # measurement variance (w*h)^2, so with h held fixed (noise scales
        # with h) the u, v error contracts exactly by 1/(1 + 4k).
        z0 = np.array([100.0, 100.0, 0.3, 150.0])
        z = np.array([140.0, 90.0, 0.3, 150.0])
        state = kf_initiate(z0, PARAMS)
        for _ in range(20):
            state = kf_update(state, z, PARAMS)
        for dim in (0, 1):
            expected = z[dim] - (z[dim] - z0[dim]) / 81.0
            assert state.mean[dim] == pytest.approx(expected, rel=1e-9)

    def test_predict_update_loop_converges_to_fixed_measurement(self):
        state = kf_initiate(np.array([100.0, 100.0, 0.3, 150.0]), PARAMS)
        z = np.array([140.0, 90.0, 0.32, 155.0])
        errors = []
        for _ in range(100):
            state = kf_predict(state, PARAMS)
            state = kf_update(state, z, PARAMS)
            errors.append(float(np.max(np.abs(state.mean[:2] - z[:2]))))
        assert errors[-1] < 1e-3
        assert errors[-1] < errors[20] < errors[0]

    def test_posterior_position_between_prior_and_measurement(self):
        state = kf_initiate(np.array([100.0, 100.0, 0.3, 150.0]), PARAMS)
        state = kf_predict(state, PARAMS)
        z = np.array([130.0, 80.0, 0.35, 160.0])
        out = kf_update(state, z, PARAMS)
        for i in (0, 1, 3):
            lo, hi = sorted((state.mean[i], z[i]))
            assert lo - 1e-9 <= out.mean[i] <= hi + 1e-9

    def test_covariance_health_random_sequences(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), PARAMS)
            for _ in range(rng.integers(3, 25)):
                state = kf_predict(state, PARAMS)
                if rng.random() < 0.6:
                    z = state.mean[:4] + rng.normal(0, [5, 5, 0.02, 5])
                    z[2] = max(z[2], 0.05)
                    z[3] = max(z[3], 10.0)
                    state = kf_update(state, z, PARAMS)
            cov = state.covariance
            assert np.max(np.abs(cov - cov.T)) < 1e-9
            assert np.min(np.linalg.eigvalsh(cov)) > 0.0

    def test_degenerate_covariance_reported(self):
        not_pd = KalmanState(np.array([0, 0, 0.3, 150.0, 0, 0, 0, 0], dtype=float),
                             -1000.0 * np.eye(8))
        with pytest.raises(DegenerateCovarianceError):
            kf_update(not_pd, np.array([0.0, 0.0, 0.3, 150.0]), PARAMS)
        broken = KalmanState(np.array([0, 0, 0.3, 150.0, 0, 0, 0, 0], dtype=float),
                             np.full((8, 8), np.nan))
        with pytest.raises(DegenerateCovarianceError):
            kf_update(broken, np.array([0.0, 0.0, 0.3, 150.0]), PARAMS)


class TestGate:
    def test_zero_distance_at_predicted_mean(self):
        state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), PARAMS)
        state = kf_predict(state, PARAMS)
        passes, d = gate(state, state.mean[:4].copy(), PARAMS)
        assert passes
        assert d == pytest.approx(0.0, abs=1e-12)

    def test_quadratic_form_hand_values(self):
        mean = np.zeros(4)
        cov = np.eye(4)
        assert squared_mahalanobis(mean, cov, np.array([3.0, 0, 0, 0])) == pytest.approx(9.0)
        assert squared_mahalanobis(mean, cov, np.array([3.2, 0, 0, 0])) == pytest.approx(10.24)

    def test_pass_fail_flip_at_threshold(self):
        assert 9.0 <= PARAMS.gating_threshold
        assert 10.24 > PARAMS.gating_threshold

    def test_threshold_matches_chi_square_inverse_cdf(self):
        # independent oracle: closed-form chi-square CDF at 4 dof + bisection
        oracle = chi2_ppf_4dof(0.95)
        assert abs(PARAMS.gating_threshold - oracle) < 1e-3

    def test_far_measurement_fails(self):
        state = kf_initiate(np.array([320.0, 240.0, 0.3, 170.0]), PARAMS)
        state = kf_predict(state, PARAMS)
        passes, d = gate(state, np.array([20.0, 240.0, 0.3, 170.0]), PARAMS)
        assert not passes
        assert d > PARAMS.gating_threshold


class TestAppearanceCost:
    def _track_with_gallery(self, vectors):
        t = Track(id=1, state=kf_initiate(np.array([0, 0, 0.3, 150.0]), PARAMS))
        for v in vectors:
            t.gallery.append(np.asarray(v, dtype=float))
        return t

    def test_identical_vector_costs_zero(self):
        f = np.array(base_feature("x"))
        track = self._track_with_gallery([f])
        assert appearance_cost(track, f) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_costs_one(self):
        e1 = np.zeros(16)
        e1[0] = 1.0
        e2 = np.zeros(16)
        e2[1] = 1.0
        track = self._track_with_gallery([e1])
        assert appearance_cost(track, e2) == pytest.approx(1.0)

    def test_diagonal_blend(self):
        e1 = np.zeros(16)
        e1[0] = 1.0
        e2 = np.zeros(16)
        e2[1] = 1.0
        track = self._track_with_gallery([e1, e2])
        blend = (e1 + e2) / math.sqrt(2.0)
        assert appearance_cost(track, blend) == pytest.approx(1.0 - 1.0 / math.sqrt(2.0))

    def test_empty_gallery_raises(self):
        t = Track(id=1, state=kf_initiate(np.array([0, 0, 0.3, 150.0]), PARAMS))
        with pytest.raises(EmptyGalleryError):
            appearance_cost(t, np.ones(16) / 4.0)

    def test_gallery_ring_buffer_bounded(self):
        tracker = Tracker(TrackerParams(gallery_size=5))
        for frame in range(12):
            tracker.step([detection(320.0)])
        assert len(tracker.tracks[0].gallery) == 5


class TestSolveAssignment:
    def test_two_by_two(self):
        pairs = solve_assignment(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert sorted(pairs) == [(0, 0), (1, 1)]

    def test_zero_diagonal(self):
        cost = np.full((4, 4), 100.0)
        np.fill_diagonal(cost, 0.0)
        assert sorted(solve_assignment(cost)) == [(i, i) for i in range(4)]

    def test_three_by_three_enumerated(self):
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        pairs = solve_assignment(cost)
        assert sorted(pairs) == [(0, 1), (1, 0), (2, 2)]
        assert sum(cost[r, c] for r, c in pairs) == pytest.approx(5.0)

    def test_empty_matrix(self):
        assert solve_assignment(np.zeros((0, 3))) == []
        assert solve_assignment(np.zeros((0, 0))) == []

    def test_all_infeasible(self):
        assert solve_assignment(np.full((3, 3), INFEASIBLE)) == []

    def test_matches_brute_force_full_matchings(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            rows = int(rng.integers(1, 6))
            cols = int(rng.integers(1, 6))
            cost = rng.uniform(0, 10, size=(rows, cols))
            pairs = solve_assignment(cost)
            assert len(pairs) == min(rows, cols)
            total = sum(cost[r, c] for r, c in sorted(pairs))
            oracle, _ = brute_force_full(cost)
            assert total == pytest.approx(oracle, abs=1e-12)

    def test_matches_brute_force_with_infeasible_cells(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            rows = int(rng.integers(1, 6))
            cols = int(rng.integers(1, 6))
            cost = rng.uniform(0, 10, size=(rows, cols))
            mask = rng.random(size=(rows, cols)) < 0.4
            cost[mask] = INFEASIBLE
            pairs = solve_assignment(cost)
            for r, c in pairs:
                assert not np.isinf(cost[r, c])
            card, best_cost = brute_force_partial(cost)
            assert len(pairs) == card
            if card:
                total = sum(cost[r, c] for r, c in pairs)
                assert total == pytest.approx(best_cost, abs=1e-9)


class TestCascadeMatch:
    def _confirmed_track(self, track_id, u, pid, time_since_update=0):
        state = kf_initiate(np.array([u, 240.0, 50.0 / 170.0, 170.0]), PARAMS)
        t = Track(id=track_id, state=state, stage=TrackStage.CONFIRMED, hits=5,
                  time_since_update=time_since_update)
        t.gallery.append(np.asarray(base_feature(pid)))
        return t

    def test_single_compatible_pair_matches(self):
        track = self._confirmed_track(1, 320.0, "a")
        matches, unmatched_t, unmatched_d = cascade_match([track], [detection(322.0, pid="a")], PARAMS)
        assert matches == [(0, 0)]
        assert unmatched_t == [] and unmatched_d == []

    def test_gate_dominates_appearance(self):
        track = self._confirmed_track(1, 320.0, "a")
        far = detection(40.0, pid="a")  # same appearance, hopeless motion
        matches, unmatched_t, unmatched_d = cascade_match([track], [far], PARAMS)
        assert matches == []
        assert unmatched_t == [0] and unmatched_d == [0]

    def test_appearance_threshold_blocks(self):
        track = self._confirmed_track(1, 320.0, "a")
        imposter = detection(321.0, pid="b")  # inside gate, wrong appearance
        matches, _, _ = cascade_match([track], [imposter], PARAMS)
        assert matches == []

    def test_fresher_track_wins_cascade_tier(self):
        fresh = self._confirmed_track(1, 320.0, "a", time_since_update=0)
        stale = self._confirmed_track(2, 320.0, "a", time_since_update=5)
        det = detection(320.0, pid="a")
        matches, _, _ = cascade_match([stale, fresh], [det], PARAMS)
        assert matches == [(1, 0)]

    def test_tentative_matches_by_iou(self):
        state = kf_initiate(np.array([320.0, 240.0, 50.0 / 170.0, 170.0]), PARAMS)
        tentative = Track(id=1, state=state, stage=TrackStage.TENTATIVE, hits=1)
        tentative.gallery.append(np.asarray(base_feature("a")))
        det = detection(325.0, pid="b")  # different feature; IoU carries it
        matches, _, _ = cascade_match([tentative], [det], PARAMS)
        assert matches == [(0, 0)]


class TestTrackerLifecycle:
    def test_cold_start_spawns_sequential_ids(self):
        tracker = Tracker()
        result = tracker.step([detection(100.0, pid="a"), detection(400.0, pid="b")])
        assert result.new_track_ids == (1, 2)
        assert result.assignments == ()
        assert all(t.stage is TrackStage.TENTATIVE for t in tracker.tracks)

    def test_confirmed_after_n_init_consecutive_hits(self):
        tracker = Tracker()
        stages = []
        for frame in range(4):
            tracker.step([detection(320.0, pid="a")])
            stages.append(tracker.tracks[0].stage)
        # hit counting starts at spawn: confirmed on the n_init-th frame (index 2)
        assert stages[0] is TrackStage.TENTATIVE
        assert stages[1] is TrackStage.TENTATIVE
        assert stages[2] is TrackStage.CONFIRMED
        assert stages[3] is TrackStage.CONFIRMED

    def test_tentative_deleted_on_first_miss(self):
        tracker = Tracker()
        tracker.step([detection(320.0, pid="a")])
        result = tracker.step([])
        assert result.deleted_track_ids == (1,)
        assert tracker.tracks == []

    def test_confirmed_survives_until_max_age(self):
        params = TrackerParams(max_age=5)
        tracker = Tracker(params)
        for _ in range(3):
            tracker.step([detection(320.0, pid="a")])
        for _ in range(5):
            result = tracker.step([])
            assert result.deleted_track_ids == ()
        result = tracker.step([])
        assert result.deleted_track_ids == (1,)

    def test_ids_never_reused(self):
        tracker = Tracker()
        seen = set()
        rng = np.random.default_rng(31)
        for frame in range(60):
            dets = []
            if rng.random() < 0.8:
                dets.append(detection(float(rng.uniform(50, 590)), pid="a"))
            if rng.random() < 0.5:
                dets.append(detection(float(rng.uniform(50, 590)), pid="b"))
            result = tracker.step(dets)
            for tid in result.new_track_ids:
                assert tid not in seen
                seen.add(tid)
            # partial matching invariant
            tids = [t for t, _ in result.assignments]
            dids = [d for _, d in result.assignments]
            assert len(tids) == len(set(tids))
            assert len(dids) == len(set(dids))

    def test_single_target_stable_id_and_single_confirmed(self):
        tracker = Tracker()
        for frame in range(50):
            u = 320.0 + 0.5 * frame
            result = tracker.step([detection(u, pid="a")])
            if frame >= PARAMS.n_init - 1:
                assert len(result.confirmed_tracks) >= (1 if frame > PARAMS.n_init - 1 else 0)
            assert len(tracker.tracks) == 1
            assert tracker.tracks[0].id == 1

    def test_reattaches_after_occlusion_gap_shorter_than_max_age(self):
        tracker = Tracker()
        noise = NoiseSpec(feature_sigma=0.05, rng_seed=3)
        for frame in range(10):
            tracker.step([detection(320.0, pid="a",
                                    feature=synth_feature("a", noise, frame)),
                          detection(100.0, pid="b",
                                    feature=synth_feature("b", noise, frame))])
        for frame in range(10, 25):  # full occlusion of "a"
            tracker.step([detection(100.0, pid="b",
                                    feature=synth_feature("b", noise, frame))])
        result = tracker.step([detection(322.0, pid="a",
                                         feature=synth_feature("a", noise, 25)),
                               detection(100.0, pid="b",
                                         feature=synth_feature("b", noise, 25))])
        assigned = dict(result.assignments)
        assert 1 in assigned  # original id for "a"
        assert result.new_track_ids == ()

    def test_new_id_after_gap_longer_than_max_age(self):
        params = TrackerParams(max_age=8)
        tracker = Tracker(params)
        for frame in range(5):
            tracker.step([detection(320.0, pid="a")])
        for _ in range(10):
            tracker.step([])
        assert tracker.tracks == []
        result = tracker.step([detection(320.0, pid="a")])
        assert result.new_track_ids == (2,)


class TestIoU:
    def test_disjoint_zero(self):
        assert iou((0, 0, 2, 2), (10, 10, 2, 2)) == 0.0

    def test_identical_one(self):
        assert iou((5, 5, 4, 6), (5, 5, 4, 6)) == pytest.approx(1.0)

    def test_half_overlap(self):
        # two unit squares sharing half their area: IoU = 1/3
        assert iou((0.0, 0.0, 1.0, 1.0), (0.5, 0.0, 1.0, 1.0)) == pytest.approx(1.0 / 3.0)
