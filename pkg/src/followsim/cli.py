"""Command-line interface.

Subcommands: `run` executes a scenario and writes ticks/metrics/manifest
(optionally a trajectory SVG), `track` replays the tracker over a
detection log, `field` dumps the potential field on a grid. Scenario
configs are versioned JSON documents; S1/S2/S3 name the built-ins.

Exit codes: 0 success, 1 failed success criteria, 2 bad config or log,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .apf import ApfParams, total_force, total_potential
from .follow import FollowParams
from .scenarios import builtin_scenarios
from .sensor import CameraModel, DetlogError, NoiseSpec, read_detlog
from .sim import (ConfigError, MetricsReport, ScenarioConfig, SuccessCriteria, TickRecord,
                  run_detailed, validate_config)
from .tracker import Tracker, TrackerParams
from .world import Pedestrian, Pose2D, RobotPlant, Shelf, WorldState

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CRITERIA = 1
EXIT_CONFIG = 2
EXIT_IO = 3


# ---------------------------------------------------------------------------
# config (de)serialization

def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "name": config.name,
        "dt": config.dt,
        "max_steps": config.max_steps,
        "rng_seed": config.rng_seed,
        "world": {
            "bounds": list(config.bounds),
            "shelves": [[s.min_x, s.min_y, s.max_x, s.max_y] for s in config.shelves],
        },
        "robot": {
            "pose": [config.robot.pose.x, config.robot.pose.y, config.robot.pose.theta],
            "radius": config.robot.radius,
            "max_speed": config.robot.max_speed,
            "max_turn_rate": config.robot.max_turn_rate,
        },
        "pedestrians": [
            {
                "id": p.id,
                "position": list(p.position),
                "height": p.height,
                "shoulder_width": p.shoulder_width,
                "speed": p.speed,
                "waypoints": [list(w) for w in p.waypoints],
                "spawn_time": p.spawn_time,
            }
            for p in config.pedestrians
        ],
        "target_id": config.target_id,
        "camera": {
            "focal_px": config.camera.focal_px,
            "image_width": config.camera.image_width,
            "image_height": config.camera.image_height,
            "max_depth": config.camera.max_depth,
        },
        "noise": {
            "pixel_sigma": config.noise.pixel_sigma,
            "depth_sigma": config.noise.depth_sigma,
            "feature_sigma": config.noise.feature_sigma,
            "miss_rate": config.noise.miss_rate,
            "feature_dim": config.noise.feature_dim,
        },
        "occlusion_fraction": config.occlusion_fraction,
        "tracker": {
            "n_init": config.tracker.n_init,
            "max_age": config.tracker.max_age,
            "gating_threshold": config.tracker.gating_threshold,
            "appearance_threshold": config.tracker.appearance_threshold,
            "lambda_motion": config.tracker.lambda_motion,
            "iou_threshold": config.tracker.iou_threshold,
            "gallery_size": config.tracker.gallery_size,
            "process_noise_scale": config.tracker.process_noise_scale,
            "measurement_noise_scale": config.tracker.measurement_noise_scale,
        },
        "follow": {
            "center_deadband": config.follow.center_deadband,
            "desired_distance": config.follow.desired_distance,
            "distance_deadband": config.follow.distance_deadband,
            "k_linear": config.follow.k_linear,
            "turn_rate": config.follow.turn_rate,
            "width_tolerance": config.follow.width_tolerance,
            "center_tolerance": config.follow.center_tolerance,
            "search_patience": config.follow.search_patience,
        },
        "apf": {
            "k_att": config.apf.k_att,
            "k_rep": config.apf.k_rep,
            "rho0": config.apf.rho0,
            "force_cap": config.apf.force_cap,
            "blend_distance": config.apf.blend_distance,
            "local_min_epsilon": config.apf.local_min_epsilon,
            "goal_radius": config.apf.goal_radius,
            "k_omega": config.apf.k_omega,
            "k_v": config.apf.k_v,
        },
        "success": {
            "min_clearance": config.success.min_clearance,
            "max_final_distance": config.success.max_final_distance,
        },
    }


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, "must be an object")
    return value


def _build(cls, section: dict, field_name: str, **kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(field_name, str(exc)) from None


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a JSON document."""
    if not isinstance(data, dict):
        raise ConfigError("document", "top level must be an object")
    schema = data.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    known = {"schema", "name", "dt", "max_steps", "rng_seed", "world", "robot",
             "pedestrians", "target_id", "camera", "noise", "occlusion_fraction",
             "tracker", "follow", "apf", "success"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown field")

    world = _section(data, "world")
    bounds = tuple(world.get("bounds", (0.0, 0.0, 10.0, 10.0)))
    if len(bounds) != 4:
        raise ConfigError("world.bounds", "must be [min_x, min_y, max_x, max_y]")
    shelves = []
    for i, rect in enumerate(world.get("shelves", [])):
        if len(rect) != 4:
            raise ConfigError(f"world.shelves[{i}]", "must be [min_x, min_y, max_x, max_y]")
        try:
            shelves.append(Shelf(*[float(v) for v in rect]))
        except ValueError as exc:
            raise ConfigError(f"world.shelves[{i}]", str(exc)) from None

    robot_data = _section(data, "robot")
    pose = robot_data.get("pose", [0.0, 0.0, 0.0])
    if len(pose) != 3:
        raise ConfigError("robot.pose", "must be [x, y, theta]")
    robot = _build(RobotPlant, robot_data, "robot",
                   pose=Pose2D(float(pose[0]), float(pose[1]), float(pose[2])),
                   radius=float(robot_data.get("radius", 0.25)),
                   max_speed=float(robot_data.get("max_speed", 1.2)),
                   max_turn_rate=float(robot_data.get("max_turn_rate", 1.5)))

    pedestrians = []
    for i, ped in enumerate(data.get("pedestrians", [])):
        field = f"pedestrians[{i}]"
        if not isinstance(ped, dict):
            raise ConfigError(field, "must be an object")
        if "id" not in ped or "position" not in ped or "waypoints" not in ped:
            raise ConfigError(field, "requires id, position and waypoints")
        pedestrians.append(_build(
            Pedestrian, ped, field,
            id=str(ped["id"]),
            position=tuple(float(v) for v in ped["position"]),
            height=float(ped.get("height", 1.7)),
            shoulder_width=float(ped.get("shoulder_width", 0.5)),
            speed=float(ped.get("speed", 1.0)),
            waypoints=tuple(tuple(float(v) for v in w) for w in ped["waypoints"]),
            spawn_time=float(ped.get("spawn_time", 0.0)),
        ))

    camera = _build(CameraModel, _section(data, "camera"), "camera",
                    **{k: v for k, v in _section(data, "camera").items()})
    noise = _build(NoiseSpec, _section(data, "noise"), "noise",
                   **{k: v for k, v in _section(data, "noise").items()})
    tracker = _build(TrackerParams, _section(data, "tracker"), "tracker",
                     **{k: v for k, v in _section(data, "tracker").items()})
    follow = _build(FollowParams, _section(data, "follow"), "follow",
                    **{k: v for k, v in _section(data, "follow").items()})
    apf = _build(ApfParams, _section(data, "apf"), "apf",
                 **{k: v for k, v in _section(data, "apf").items()})
    success = _build(SuccessCriteria, _section(data, "success"), "success",
                     **{k: v for k, v in _section(data, "success").items()})

    config = ScenarioConfig(
        name=str(data.get("name", "custom")),
        dt=float(data.get("dt", 0.05)),
        max_steps=int(data.get("max_steps", 400)),
        rng_seed=int(data.get("rng_seed", 0)),
        bounds=tuple(float(v) for v in bounds),
        shelves=tuple(shelves),
        robot=robot,
        pedestrians=tuple(pedestrians),
        target_id=data.get("target_id"),
        camera=camera,
        noise=noise,
        occlusion_fraction=float(data.get("occlusion_fraction", 0.6)),
        tracker=tracker,
        follow=follow,
        apf=apf,
        success=success,
    )
    validate_config(config)
    return config


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(str(path), "no such config file") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"JSON parse error at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def resolve_scenario(spec: str) -> ScenarioConfig:
    builtins = builtin_scenarios()
    if spec in builtins:
        return builtins[spec]
    return load_config(spec)


# ---------------------------------------------------------------------------
# artifact writers

TICKS_HEADER = ("t,robot_x,robot_y,robot_theta,target_x,target_y,lock_id,"
                "cmd_v,cmd_omega,min_clearance,n_detections,n_confirmed")


def write_ticks_csv(path, ticks, target_id) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TICKS_HEADER + "\n")
        for tick in ticks:
            target = next(((x, y) for pid, x, y in tick.pedestrians if pid == target_id),
                          (math.nan, math.nan))
            lock = tick.lock_id if tick.lock_id is not None else -1
            fh.write(
                f"{tick.t:.6f},{tick.robot_x:.6f},{tick.robot_y:.6f},{tick.robot_theta:.6f},"
                f"{target[0]:.6f},{target[1]:.6f},{lock},"
                f"{tick.cmd_v:.6f},{tick.cmd_omega:.6f},{tick.min_clearance:.6f},"
                f"{tick.n_detections},{tick.n_confirmed}\n"
            )


def write_trajectory_svg(path, config: ScenarioConfig, ticks) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    fig, ax = plt.subplots(figsize=(8.0, 6.0))
    for shelf in config.shelves:
        ax.add_patch(Rectangle((shelf.min_x, shelf.min_y),
                               shelf.max_x - shelf.min_x, shelf.max_y - shelf.min_y,
                               facecolor="0.75", edgecolor="0.4"))
    for ped in config.pedestrians:
        route_x = [ped.position[0]] + [w[0] for w in ped.waypoints]
        route_y = [ped.position[1]] + [w[1] for w in ped.waypoints]
        style = "--" if ped.id == config.target_id else ":"
        ax.plot(route_x, route_y, style, linewidth=1.2,
                label=f"{ped.id} route")
    if ticks:
        ax.plot([t.robot_x for t in ticks], [t.robot_y for t in ticks],
                "-", color="tab:blue", linewidth=1.6, label="robot")
        ax.plot(ticks[0].robot_x, ticks[0].robot_y, "o", color="tab:blue", markersize=5)
        ax.plot(ticks[-1].robot_x, ticks[-1].robot_y, "s", color="tab:blue", markersize=5)
    min_x, min_y, max_x, max_y = config.bounds
    ax.set_xlim(min_x, max_x)
    ax.set_ylim(min_y, max_y)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(config.name)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_manifest(out_dir: Path, config_path: str, seed: int, artifacts: list[str]) -> None:
    config_bytes = (out_dir / "resolved_config.json").read_bytes()
    manifest = {
        "config_path": config_path,
        "seed": seed,
        "out_dir": str(out_dir),
        "artifacts": artifacts,
        "tool_version": __version__,
        "schema": SCHEMA_VERSION,
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands

def _criteria_met(metrics: MetricsReport, success: SuccessCriteria) -> bool:
    if not metrics.completed or metrics.collisions > 0 or metrics.target_loss_events > 0:
        return False
    if success.min_clearance is not None and metrics.min_clearance_overall < success.min_clearance:
        return False
    if success.max_final_distance is not None and not (
            metrics.final_distance_to_target <= success.max_final_distance):
        return False
    return True


def _run_single(config: ScenarioConfig, config_path: str, out_dir: Path, plot: bool) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = json.dumps(config_to_dict(config), indent=2) + "\n"
    (out_dir / "resolved_config.json").write_text(resolved, encoding="utf-8")
    result = run_detailed(config)
    write_ticks_csv(out_dir / "ticks.csv", result.ticks, config.target_id)
    (out_dir / "metrics.txt").write_text(result.metrics.to_text(), encoding="utf-8")
    artifacts = ["resolved_config.json", "ticks.csv", "metrics.txt"]
    if plot:
        write_trajectory_svg(out_dir / "trajectory.svg", config, result.ticks)
        artifacts.append("trajectory.svg")
    write_manifest(out_dir, config_path, config.rng_seed, artifacts)
    return EXIT_OK if _criteria_met(result.metrics, config.success) else EXIT_CRITERIA


def cmd_run(args) -> int:
    config = resolve_scenario(args.scenario)
    if args.dt_override is not None:
        if args.dt_override <= 0:
            raise ConfigError("--dt-override", "must be positive")
        config = replace(config, dt=args.dt_override)
    out_root = Path(args.out)
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError("--seeds", "must be a comma-separated list of integers") from None
        jobs = [(replace(config, rng_seed=seed), args.scenario,
                 out_root / f"seed_{seed}", args.plot) for seed in seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(pool.map(_run_single_star, jobs))
        else:
            codes = [_run_single(*job) for job in jobs]
        return max(codes)
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    return _run_single(config, args.scenario, out_root, args.plot)


def _run_single_star(job) -> int:
    return _run_single(*job)


def cmd_track(args) -> int:
    frames = read_detlog(args.detections)
    params = TrackerParams()
    if args.params:
        try:
            data = json.loads(Path(args.params).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(args.params, "no such params file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(args.params,
                              f"JSON parse error at line {exc.lineno}: {exc.msg}") from None
        try:
            params = TrackerParams(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError("params", str(exc)) from None
    tracker = Tracker(params)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    attribution: dict[str, int] = {}
    switches = 0
    any_gt = False
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("frame,track_id,u,v,w,h,stage\n")
        for frame, dets in enumerate(frames):
            result = tracker.step(dets)
            for track in tracker.tracks:
                u, v, w, h = track.to_box()
                fh.write(f"{frame},{track.id},{u:.6f},{v:.6f},{w:.6f},{h:.6f},"
                         f"{track.stage.value}\n")
            for track_id, di in result.assignments:
                gt = dets[di].source_id
                if gt is None:
                    continue
                any_gt = True
                if gt in attribution and attribution[gt] != track_id:
                    switches += 1
                attribution[gt] = track_id
    print(f"frames={len(frames)} tracks_created={tracker._next_id - 1}")
    if any_gt:
        print(f"id_switches={switches}")
    return EXIT_OK


def cmd_field(args) -> int:
    config = resolve_scenario(args.scenario)
    if args.grid < 2:
        raise ConfigError("--grid", "needs at least 2 points per axis")
    world0 = WorldState(time=0.0, robot=config.robot,
                        pedestrians=config.pedestrians, shelves=config.shelves,
                        bounds=config.bounds)
    if args.goal:
        try:
            gx, gy = (float(v) for v in args.goal.split(","))
        except ValueError:
            raise ConfigError("--goal", "must be x,y") from None
        goal = (gx, gy)
    else:
        target = next((p for p in config.pedestrians if p.id == config.target_id), None)
        if target is not None:
            goal = target.position
        else:
            min_x, min_y, max_x, max_y = config.bounds
            goal = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0)
    min_x, min_y, max_x, max_y = config.bounds
    xs = np.linspace(min_x, max_x, args.grid)
    ys = np.linspace(min_y, max_y, args.grid)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    magnitudes = np.zeros((args.grid, args.grid))
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y,fx,fy,u_total\n")
        for yi, y in enumerate(ys):
            for xi, x in enumerate(xs):
                probe = replace(world0, robot=replace(
                    config.robot, pose=Pose2D(float(x), float(y), 0.0)))
                forces = total_force(probe, goal, config.target_id, config.apf)
                u_total = total_potential(probe, goal, config.target_id, config.apf)
                fx, fy = forces.resultant
                magnitudes[yi, xi] = math.hypot(fx, fy)
                fh.write(f"{x:.6f},{y:.6f},{fx:.6f},{fy:.6f},{u_total:.6f}\n")
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(7.0, 6.0))
        mesh = ax.pcolormesh(xs, ys, magnitudes, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="|force|")
        ax.plot(goal[0], goal[1], "r*", markersize=10)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        plot_path = out_path.with_suffix(".svg")
        fig.savefig(plot_path, format="svg")
        plt.close(fig)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="followsim",
        description="Warehouse person-following simulator",
    )
    parser.add_argument("--version", action="version",
                        version=f"followsim {__version__} (config schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write artifacts")
    run_p.add_argument("--scenario", required=True,
                       help="S1, S2, S3 or a path to a scenario JSON")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--seeds", default=None,
                       help="comma-separated seed batch; writes out/seed_<n>/")
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--plot", action="store_true")
    run_p.add_argument("--dt-override", type=float, default=None)
    run_p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for --seeds batches")
    run_p.set_defaults(func=cmd_run)

    track_p = sub.add_parser("track", help="run the tracker over a detection log")
    track_p.add_argument("--detections", required=True)
    track_p.add_argument("--params", default=None, help="tracker params JSON")
    track_p.add_argument("--out", default="tracks.csv")
    track_p.set_defaults(func=cmd_track)

    field_p = sub.add_parser("field", help="dump the potential field on a grid")
    field_p.add_argument("--scenario", required=True)
    field_p.add_argument("--grid", type=int, default=20)
    field_p.add_argument("--out", default="field.csv")
    field_p.add_argument("--goal", default=None, help="override goal as x,y")
    field_p.add_argument("--plot", action="store_true")
    field_p.set_defaults(func=cmd_field)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DetlogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
