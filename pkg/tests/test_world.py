"""World model: kinematics, pedestrian motion, clearance, collisions."""

import math

import numpy as np
import pytest

from followsim.world import (CollisionReport, Pedestrian, Pose2D, RobotPlant, Shelf,
                             WorldState, advance_pedestrian, check_collision, clearance,
                             step_unicycle, wrap_angle)


def euler_unicycle(pose, v, omega, dt, substeps):
    """Independent fine-grained Euler integration of the same plant."""
    h = dt / substeps
    thetas = pose.theta + omega * h * np.arange(substeps)
    x = pose.x + v * h * float(np.sum(np.cos(thetas)))
    y = pose.y + v * h * float(np.sum(np.sin(thetas)))
    return x, y, pose.theta + omega * dt


def make_world(robot_xy=(0.0, 0.0), robot_theta=0.0, radius=0.3,
               pedestrians=(), shelves=()):
    return WorldState(
        time=0.0,
        robot=RobotPlant(pose=Pose2D(robot_xy[0], robot_xy[1], robot_theta), radius=radius),
        pedestrians=tuple(pedestrians),
        shelves=tuple(shelves),
        bounds=(-100.0, -100.0, 100.0, 100.0),
    )


class TestWrapAngle:
    def test_identity_inside_interval(self):
        assert wrap_angle(0.5) == pytest.approx(0.5, abs=1e-12)
        assert wrap_angle(0.0) == 0.0

    def test_boundaries(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_range_random(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-50, 50, size=500):
            w = wrap_angle(float(theta))
            assert -math.pi < w <= math.pi
            # same direction modulo full turns
            assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
            assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)


class TestStepUnicycle:
    def test_straight_motion(self):
        pose = step_unicycle(Pose2D(0, 0, 0), v=1.0, omega=0.0, dt=0.1)
        assert (pose.x, pose.y, pose.theta) == pytest.approx((0.1, 0.0, 0.0))

    def test_pure_rotation(self):
        pose = step_unicycle(Pose2D(0, 0, 0), v=0.0, omega=1.0, dt=math.pi)
        assert (pose.x, pose.y) == (0.0, 0.0)
        assert pose.theta == pytest.approx(math.pi)

    def test_quarter_circle_arc(self):
        # closed form: unit-radius arc through a quarter turn
        pose = step_unicycle(Pose2D(0, 0, 0), v=1.0, omega=1.0, dt=math.pi / 2)
        assert pose.x == pytest.approx(1.0, abs=1e-12)
        assert pose.y == pytest.approx(1.0, abs=1e-12)
        assert pose.theta == pytest.approx(math.pi / 2)
        ex, ey, _ = euler_unicycle(Pose2D(0, 0, 0), 1.0, 1.0, math.pi / 2, 100_000)
        assert math.hypot(pose.x - ex, pose.y - ey) < 1e-4

    def test_omega_zero_preserves_theta_exactly(self):
        pose = Pose2D(1.0, 2.0, 0.7345)
        out = step_unicycle(pose, v=0.33, omega=0.0, dt=0.05)
        assert out.theta == pose.theta

    def test_v_zero_preserves_position_exactly(self):
        pose = Pose2D(1.0, 2.0, 0.7345)
        out = step_unicycle(pose, v=0.0, omega=0.8, dt=0.05)
        assert (out.x, out.y) == (pose.x, pose.y)

    def test_euler_convergence_order(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pose = Pose2D(*rng.uniform(-2, 2, size=2), float(rng.uniform(-3, 3)))
            v = float(rng.uniform(0, 1.5))
            omega = float(rng.uniform(-1.5, 1.5))
            dt = float(rng.uniform(0.05, 0.5))
            exact = step_unicycle(pose, v, omega, dt)
            coarse = euler_unicycle(pose, v, omega, dt, 200)
            fine = euler_unicycle(pose, v, omega, dt, 2000)
            err_coarse = math.hypot(exact.x - coarse[0], exact.y - coarse[1])
            err_fine = math.hypot(exact.x - fine[0], exact.y - fine[1])
            assert err_fine <= err_coarse + 1e-12
            assert err_fine < 1e-3

    def test_rejects_non_positive_dt(self):
        with pytest.raises(ValueError):
            step_unicycle(Pose2D(0, 0, 0), 1.0, 0.0, 0.0)


def walker(position, waypoints, speed=1.0, index=0):
    return Pedestrian(id="p", position=position, height=1.7, shoulder_width=0.5,
                      speed=speed, waypoints=waypoints, waypoint_index=index)


class TestAdvancePedestrian:
    def test_linear_advance(self):
        p = walker((0.0, 0.0), ((10.0, 0.0),))
        out = advance_pedestrian(p, 0.5)
        assert out.position == pytest.approx((0.5, 0.0))
        assert out.waypoint_index == 0

    def test_snap_and_advance_index(self):
        p = walker((9.9, 0.0), ((10.0, 0.0), (10.0, 5.0)))
        out = advance_pedestrian(p, 0.5)
        assert out.position == (10.0, 0.0)
        assert out.waypoint_index == 1

    def test_terminal_hold(self):
        p = walker((10.0, 0.0), ((10.0, 0.0),))
        out = advance_pedestrian(p, 3.0)
        assert out.position == (10.0, 0.0)
        assert out.waypoint_index == 0
        assert out.reached_final_waypoint()

    def test_zero_speed_holds(self):
        p = walker((1.0, 1.0), ((5.0, 5.0),), speed=0.0)
        assert advance_pedestrian(p, 1.0) is p

    def test_path_length_matches_speed_times_time(self):
        p = walker((0.0, 0.0), ((3.0, 4.0),), speed=0.7)
        dt = 0.05
        total = 0.0
        steps = 0
        while not p.reached_final_waypoint():
            nxt = advance_pedestrian(p, dt)
            total += math.hypot(nxt.position[0] - p.position[0],
                                nxt.position[1] - p.position[1])
            p = nxt
            steps += 1
            assert steps < 10_000
        elapsed = steps * dt
        assert abs(total - 5.0) < 1e-9  # walked the whole segment
        assert abs(0.7 * elapsed - total) <= 0.7 * dt + 1e-9


class TestClearance:
    def test_axis_aligned_gap(self):
        assert clearance((0.0, 0.0), [Shelf(1.0, -1.0, 2.0, 1.0)]) == pytest.approx(1.0)

    def test_inside_is_zero(self):
        assert clearance((1.5, 0.0), [Shelf(1.0, -1.0, 2.0, 1.0)]) == 0.0

    def test_corner_distance(self):
        # nearest corner at (3, 4): classic 3-4-5 triangle
        assert clearance((0.0, 0.0), [Shelf(3.0, 4.0, 5.0, 6.0)]) == pytest.approx(5.0)

    def test_empty_list_is_infinite(self):
        assert clearance((0.0, 0.0), []) == math.inf

    def test_lipschitz(self):
        rng = np.random.default_rng(3)
        shelves = []
        for _ in range(5):
            x0, x1 = sorted(rng.uniform(-5, 5, 2))
            y0, y1 = sorted(rng.uniform(-5, 5, 2))
            shelves.append(Shelf(x0, y0, x1 + 0.1, y1 + 0.1))
        for _ in range(300):
            p = rng.uniform(-8, 8, 2)
            q = rng.uniform(-8, 8, 2)
            lhs = abs(clearance(tuple(p), shelves) - clearance(tuple(q), shelves))
            assert lhs <= math.hypot(*(p - q)) + 1e-9


class TestCheckCollision:
    def test_clear_of_shelf(self):
        world = make_world(robot_xy=(0.0, 0.0), radius=0.3,
                           shelves=[Shelf(0.5, -1.0, 2.0, 1.0)])
        report = check_collision(world)
        assert not report.shelf_collision
        assert report.min_clearance == pytest.approx(0.5)

    def test_shelf_collision(self):
        world = make_world(robot_xy=(0.3, 0.0), radius=0.3,
                           shelves=[Shelf(0.5, -1.0, 2.0, 1.0)])
        report = check_collision(world)
        assert report.shelf_collision

    def test_pedestrian_collision_threshold(self):
        # 0.5 m separation < 0.3 robot + 0.25 half-shoulder = 0.55
        ped = walker((0.5, 0.0), ((0.5, 0.0),))
        world = make_world(robot_xy=(0.0, 0.0), radius=0.3, pedestrians=[ped])
        report = check_collision(world)
        assert report.pedestrian_collision
        assert report.hit_pedestrian_ids == ("p",)
        assert report.min_pedestrian_gap == pytest.approx(0.5 - 0.3 - 0.25)

    def test_unspawned_pedestrian_ignored(self):
        ped = Pedestrian(id="late", position=(0.4, 0.0), height=1.7, shoulder_width=0.5,
                         speed=0.0, waypoints=((0.4, 0.0),), spawn_time=5.0)
        world = make_world(robot_xy=(0.0, 0.0), radius=0.3, pedestrians=[ped])
        assert not check_collision(world).pedestrian_collision


class TestInvariants:
    def test_theta_stays_wrapped_over_long_runs(self):
        rng = np.random.default_rng(11)
        pose = Pose2D(0.0, 0.0, 0.0)
        for _ in range(2000):
            pose = step_unicycle(pose, float(rng.uniform(0, 1.5)),
                                 float(rng.uniform(-2, 2)), 0.05)
            assert -math.pi < pose.theta <= math.pi

    def test_plant_clamps_commands(self):
        plant = RobotPlant(pose=Pose2D(0, 0, 0), max_speed=1.0, max_turn_rate=0.5)
        assert plant.clamp_command(5.0, 5.0) == (1.0, 0.5)
        assert plant.clamp_command(-1.0, -5.0) == (0.0, -0.5)
