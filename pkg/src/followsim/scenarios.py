"""Built-in scenario configurations.

Three warehouse situations: S1 crosses workers in front of a stationary
camera to stress identity persistence through mutual occlusion, S2 sends
the target through a right-angle turn into a 2 m shelf aisle, and S3 has
a second worker walk head-on at the robot in a corridor. The warehouse
dimensions and walking speeds are design defaults chosen to be plausible,
not measured values.
"""

from __future__ import annotations

from .apf import ApfParams
from .follow import FollowParams
from .sensor import CameraModel, NoiseSpec
from .sim import ScenarioConfig, SuccessCriteria
from .tracker import TrackerParams
from .world import Pedestrian, Pose2D, RobotPlant, Shelf

_MILD_NOISE = NoiseSpec(pixel_sigma=1.0, depth_sigma=0.05, feature_sigma=0.05,
                        miss_rate=0.01)


def scenario_s1() -> ScenarioConfig:
    """Stationary camera, three workers, one walking across the others.

    worker_b crosses the optical axis 3.5 m out and fully hides the
    locked worker_a (7 m out) for roughly 15 frames around t = 5 s, and
    clips worker_c on the way. The robot never moves.
    """
    return ScenarioConfig(
        name="S1",
        dt=0.05,
        max_steps=240,
        bounds=(-1.0, -3.0, 10.0, 3.0),
        shelves=(),
        robot=RobotPlant(pose=Pose2D(0.0, 0.0, 0.0), radius=0.25,
                         max_speed=0.0, max_turn_rate=0.0),
        pedestrians=(
            Pedestrian(id="worker_a", position=(7.0, 0.0), height=1.7,
                       shoulder_width=0.5, speed=0.0, waypoints=((7.0, 0.0),)),
            Pedestrian(id="worker_b", position=(3.5, 2.0), height=1.75,
                       shoulder_width=0.55, speed=0.4, waypoints=((3.5, -2.0),)),
            Pedestrian(id="worker_c", position=(5.0, 1.2), height=1.65,
                       shoulder_width=0.5, speed=0.1, waypoints=((5.0, 0.8),)),
        ),
        target_id="worker_a",
        camera=CameraModel(focal_px=500.0, image_width=640, image_height=480,
                           max_depth=12.0),
        noise=_MILD_NOISE,
    )


def scenario_s2() -> ScenarioConfig:
    """Right-angle turn into a 2.0 m aisle between two shelf rows."""
    return ScenarioConfig(
        name="S2",
        dt=0.05,
        max_steps=400,
        bounds=(0.0, 0.0, 16.0, 12.0),
        shelves=(
            Shelf(5.0, 4.0, 7.0, 10.0),
            Shelf(9.0, 4.0, 11.0, 10.0),
        ),
        robot=RobotPlant(pose=Pose2D(1.5, 2.0, 0.0), radius=0.25,
                         max_speed=1.4, max_turn_rate=1.8),
        pedestrians=(
            Pedestrian(id="worker", position=(3.0, 2.0), height=1.7,
                       shoulder_width=0.5, speed=1.0,
                       waypoints=((8.0, 2.0), (8.0, 9.5))),
        ),
        target_id="worker",
        camera=CameraModel(focal_px=500.0, image_width=640, image_height=480,
                           max_depth=10.0),
        noise=NoiseSpec(pixel_sigma=2.0, depth_sigma=0.05, feature_sigma=0.05,
                        miss_rate=0.01),
        success=SuccessCriteria(min_clearance=0.1, max_final_distance=2.0),
    )


def scenario_s3() -> ScenarioConfig:
    """Corridor following with a second worker suddenly walking at the robot.

    The crosser spawns at t = 2 s on a path offset 0.55 m from the
    robot's line; without avoidance the two would brush within 5 cm.
    Repulsion is tuned hotter than default (k_rep, rho0, k_omega, turn
    rate) so the swerve starts early enough to clear a walking pace.
    """
    return ScenarioConfig(
        name="S3",
        dt=0.05,
        max_steps=300,
        bounds=(0.0, 0.0, 16.0, 7.0),
        shelves=(
            Shelf(2.0, 1.2, 14.0, 2.0),
            Shelf(2.0, 5.5, 14.0, 6.3),
        ),
        robot=RobotPlant(pose=Pose2D(2.5, 3.75, 0.0), radius=0.25,
                         max_speed=1.4, max_turn_rate=3.0),
        pedestrians=(
            Pedestrian(id="worker", position=(4.5, 3.75), height=1.7,
                       shoulder_width=0.5, speed=0.9,
                       waypoints=((13.5, 3.75),)),
            Pedestrian(id="crosser", position=(13.0, 3.20), height=1.75,
                       shoulder_width=0.5, speed=1.0,
                       waypoints=((3.0, 3.20),), spawn_time=2.0),
        ),
        target_id="worker",
        camera=CameraModel(focal_px=500.0, image_width=640, image_height=480,
                           max_depth=10.0),
        noise=_MILD_NOISE,
        apf=ApfParams(k_rep=2.5, rho0=2.2, k_omega=3.0),
        success=SuccessCriteria(min_clearance=0.1, max_final_distance=2.0),
    )


def builtin_scenarios() -> dict[str, ScenarioConfig]:
    return {"S1": scenario_s1(), "S2": scenario_s2(), "S3": scenario_s3()}
