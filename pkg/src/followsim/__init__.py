"""Deterministic 2D warehouse person-following simulator.

Pipeline per tick: synthetic RGB-D sensing -> tracking by detection ->
target lock with width-based reacquisition -> pixel-deadband steering
blended with potential-field obstacle avoidance -> unicycle plant.
"""

__version__ = "0.1.0"

from .world import (Pose2D, Shelf, Pedestrian, RobotPlant, WorldState, CollisionReport,
                    wrap_angle, step_unicycle, advance_pedestrian, clearance, check_collision)
from .sensor import (CameraModel, NoiseSpec, Detection, DetlogError,
                     project, apply_occlusion, corrupt, synth_feature, base_feature,
                     backproject, write_detlog, read_detlog)
from .tracker import (TrackerParams, KalmanState, Track, TrackStage, TrackView, FrameResult,
                      Tracker, kf_initiate, kf_predict, kf_update, kf_project, gate,
                      squared_mahalanobis, appearance_cost, solve_assignment, cascade_match,
                      iou, measurement_from_detection, DegenerateCovarianceError,
                      EmptyGalleryError, INFEASIBLE)
from .follow import (FollowParams, CommandTwist, TargetLock, LockState, TurnDirection,
                     TrackObservation, acquire_target, steer, speed, update_lock,
                     follow_command)
from .apf import (ApfParams, ForceResult, attractive_force, attractive_potential,
                  repulsive_force, repulsive_potential, total_force, total_potential,
                  force_to_twist, blend)
from .sim import (ScenarioConfig, SuccessCriteria, TickRecord, MetricsReport, FrameLog,
                  RunResult, ConfigError, validate_config, run, run_detailed,
                  attribute_tracks, ground_truth_id_switches, longest_stable_attribution)
from .scenarios import builtin_scenarios, scenario_s1, scenario_s2, scenario_s3
