"""Operator-facing command line: build, optimize, export, navigate, simulate.

Exit codes are a stable contract: 0 success, 1 episode/replay did not reach
the goal, 2 input format error, 3 configuration violation, 4 goal not in
map, 5 localization failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .builder import UpdateKind, build_from_stream, optimize
from .descriptors import ThresholdConfig, normalize, read_stream, write_stream
from .errors import (
    BadThresholdsError,
    DimMismatchError,
    FormatError,
    GoalNotInMapError,
    NonMonotonicFrameError,
    TopoNavError,
    VersionError,
)
from .graph import TopologicalMap, deserialize, serialize
from .navigator import NEED_ROTATION, NeedRotation, Phase, start_navigation
from .simworld import (
    KinematicParams,
    SimWorld,
    eval_suite,
    load_route,
    perturbed_start,
    poses_to_csv,
    record_trajectory,
    rows_to_csv,
    run_episode,
    sparsity_config,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_FORMAT = 2
EXIT_CONFIG = 3
EXIT_GOAL_NOT_IN_MAP = 4
EXIT_LOCALIZATION = 5

_THRESHOLD_FLAGS = {
    "t_add": "t_add_new_node",
    "t_dist": "t_add_distance",
    "t_loop": "t_loop_closure",
    "t_interval": "t_interval",
    "t_milestone": "t_milestone",
    "t_change": "t_change_node",
    "t_control": "t_limited_control",
    "window_behind": "match_window_behind",
    "window_ahead": "match_window_ahead",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-add", type=float, help="node-addition similarity threshold")
    parser.add_argument("--t-dist", type=float, help="motion-counting similarity threshold")
    parser.add_argument("--t-loop", type=float, help="loop-closure similarity threshold")
    parser.add_argument("--t-interval", type=int, help="minimum frames between node events")
    parser.add_argument("--t-milestone", type=float, help="localization confidence threshold")
    parser.add_argument("--t-change", type=float, help="node-switching similarity threshold")
    parser.add_argument("--t-control", type=float, help="motion-control similarity floor")
    parser.add_argument("--window-behind", type=int, help="matching window behind, in plan nodes")
    parser.add_argument("--window-ahead", type=int, help="matching window ahead, in plan nodes")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--config", type=Path, help="JSON run-config file")


def _load_run_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise FormatError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file: invalid JSON at line {exc.lineno}") from exc
    if not isinstance(data, dict):
        raise FormatError("config file must hold a JSON object")
    return data


def _resolve_thresholds(args: argparse.Namespace, run_config: dict) -> ThresholdConfig:
    """Precedence: flags > config file > built-in defaults."""
    values = dict(run_config.get("thresholds", {}))
    for flag, field_name in _THRESHOLD_FLAGS.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field_name] = flag_value
    try:
        config = ThresholdConfig.from_dict(values)
    except TypeError as exc:
        raise FormatError(f"config thresholds: {exc}") from exc
    config.validate()
    return config


def _resolve_kinematics(run_config: dict) -> KinematicParams:
    values = run_config.get("kinematics", {})
    try:
        return KinematicParams(**values)
    except (TypeError, ValueError) as exc:
        raise BadThresholdsError(f"config kinematics: {exc}") from exc


def _resolve_world(run_config: dict, seed: int) -> SimWorld:
    values = dict(run_config.get("sim", {}))
    try:
        return SimWorld(seed=seed, **values)
    except (TypeError, ValueError) as exc:
        raise BadThresholdsError(f"config sim: {exc}") from exc


def _resolve_seed(args: argparse.Namespace, run_config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(run_config.get("seed", 0))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build(args: argparse.Namespace) -> int:
    run_config = _load_run_config(args.config)
    config = _resolve_thresholds(args, run_config)
    frames = read_stream(args.stream)
    if not frames:
        raise FormatError(f"stream {args.stream} holds no frames")
    topo_map, events = build_from_stream(frames, config)
    args.out.write_bytes(serialize(topo_map))
    if args.log is not None:
        with open(args.log, "w", encoding="utf-8") as out:
            out.write(json.dumps({"event": "config", "config": config.to_dict()}) + "\n")
            for event in events:
                out.write(json.dumps(event.to_record()) + "\n")
    loops = sum(1 for e in events if e.kind is UpdateKind.LOOP_CLOSED)
    print(f"nodes={len(topo_map)} arcs={topo_map.arc_count()} loops={loops}")
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    topo_map = deserialize(args.map.read_bytes())
    optimized = optimize(topo_map, args.merge, args.sparsify)
    args.out.write_bytes(serialize(optimized))
    print(f"nodes: {len(topo_map)} -> {len(optimized)}")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    topo_map = deserialize(args.map.read_bytes())
    text = topo_map.to_dot()
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_goal_descriptor(args: argparse.Namespace, frames) -> np.ndarray:
    if args.goal_frame is not None:
        for frame in frames:
            if frame.frame_index == args.goal_frame:
                return frame.full
        raise FormatError(f"goal frame {args.goal_frame} not present in stream")
    try:
        data = json.loads(Path(args.goal_file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"goal file: invalid JSON at line {exc.lineno}") from exc
    if isinstance(data, dict):
        data = data.get("descriptor", data.get("full"))
    if not isinstance(data, list):
        raise FormatError("goal file must hold a vector or an object with 'descriptor'")
    return normalize(np.asarray(data, dtype=np.float64))


def cmd_navigate(args: argparse.Namespace) -> int:
    run_config = _load_run_config(args.config)
    topo_map = deserialize(args.map.read_bytes())
    config = _resolve_thresholds(args, run_config) if _any_threshold_flag(args) else topo_map.config
    frames = read_stream(args.stream)
    if not frames:
        raise FormatError(f"stream {args.stream} holds no frames")
    if frames[0].dim != topo_map.dim:
        raise DimMismatchError(
            f"stream dim {frames[0].dim} does not match map dim {topo_map.dim}"
        )
    goal = _load_goal_descriptor(args, frames)

    log_records: list[dict] = []
    nav = None
    reached = False
    for step_index, frame in enumerate(frames):
        if nav is None:
            result = start_navigation(topo_map, goal, frame.full, config)
            if isinstance(result, NeedRotation):
                log_records.append(
                    {"step": step_index, "action": "rotate_search", "event": "none"}
                )
                continue
            nav = result
            log_records.append(
                {"step": step_index, "action": "no_action", "event": "localized",
                 "seq_pos": 0, "plan": nav.plan}
            )
            continue
        outcome = nav.step(frame)
        log_records.append(outcome.to_record(step_index))
        if nav.phase is Phase.REACHED:
            reached = True
            break
        if nav.phase is Phase.FAILED:
            break

    if args.log is not None:
        with open(args.log, "w", encoding="utf-8") as out:
            for record in log_records:
                out.write(json.dumps(record) + "\n")

    if reached:
        print("goal reached")
        return EXIT_OK
    if nav is None:
        print("initial localization failed over the whole stream", file=sys.stderr)
        return EXIT_LOCALIZATION
    if nav.phase is Phase.FAILED:
        print("localization lost during navigation", file=sys.stderr)
        return EXIT_LOCALIZATION
    print("stream ended before the goal was reached", file=sys.stderr)
    return EXIT_FAILURE


def _any_threshold_flag(args: argparse.Namespace) -> bool:
    return any(getattr(args, flag, None) is not None for flag in _THRESHOLD_FLAGS) or (
        args.config is not None
    )


def cmd_sim_record(args: argparse.Namespace) -> int:
    run_config = _load_run_config(args.config)
    seed = _resolve_seed(args, run_config)
    world = _resolve_world(run_config, seed)
    kin = _resolve_kinematics(run_config)
    route = load_route(args.route)
    teach = record_trajectory(world, route.waypoints, kin, frame_stride=args.stride)
    write_stream(teach.frames, args.out)
    if args.poses is not None:
        frame_indices = [f.frame_index for f in teach.frames]
        Path(args.poses).write_text(
            poses_to_csv(teach.poses, frame_indices), encoding="utf-8"
        )
    print(f"frames={len(teach.frames)} route={route.name}")
    return EXIT_OK


def cmd_sim_episode(args: argparse.Namespace) -> int:
    run_config = _load_run_config(args.config)
    seed = _resolve_seed(args, run_config)
    config = _resolve_thresholds(args, run_config)
    world = _resolve_world(run_config, seed)
    kin = _resolve_kinematics(run_config)
    route = load_route(args.route)
    teach = record_trajectory(world, route.waypoints, kin, frame_stride=args.stride)
    if args.map is not None:
        topo_map = deserialize(args.map.read_bytes())
        if topo_map.dim != world.dim:
            raise DimMismatchError(
                f"map dim {topo_map.dim} does not match sim dim {world.dim}"
            )
    else:
        topo_map, _ = build_from_stream(teach.frames, config)
    goal_node = len(topo_map) - 1 if args.goal_node == "last" else int(args.goal_node)
    goal_pose = teach.pose_of_frame(topo_map.node(goal_node).frame_index)
    budget = args.budget or 8 * len(teach.poses) * args.stride
    rng = np.random.default_rng([seed, 1000])
    start = perturbed_start(teach.poses[0], args.perturb, rng)
    report = run_episode(
        world,
        topo_map,
        start,
        goal_node,
        config,
        kin,
        budget=budget,
        goal_pose=goal_pose,
        goal_radius=float(run_config.get("goal_radius", 1.0)),
    )
    if args.log is not None:
        with open(args.log, "w", encoding="utf-8") as out:
            for i, outcome in enumerate(report.outcomes):
                out.write(json.dumps(outcome.to_record(i)) + "\n")
    print(json.dumps(report.summary()))
    return EXIT_OK if report.success else EXIT_FAILURE


def cmd_sim_eval(args: argparse.Namespace) -> int:
    run_config = _load_run_config(args.config)
    seed = _resolve_seed(args, run_config)
    config = _resolve_thresholds(args, run_config)
    kin = _resolve_kinematics(run_config)
    routes = [load_route(path) for path in args.route]
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    for setting in settings:
        sparsity_config(config, setting)  # fail fast on unknown names
    world_kwargs = dict(run_config.get("sim", {}))
    rows = eval_suite(
        routes,
        episodes=args.episodes,
        seed=seed,
        base_config=config,
        kin=kin,
        settings=settings,
        world_kwargs=world_kwargs,
        frame_stride=args.stride,
        perturb_radius=args.perturb,
    )
    text = rows_to_csv(rows, config)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toponav",
        description="Topological mapping and navigation over descriptor streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build a map from a descriptor stream")
    p_build.add_argument("stream", type=Path)
    p_build.add_argument("--out", type=Path, required=True)
    p_build.add_argument("--log", type=Path, help="write the build event log (JSONL)")
    _add_common_flags(p_build)
    p_build.set_defaults(func=cmd_build)

    p_opt = sub.add_parser("optimize", help="merge duplicates and sparsify chains")
    p_opt.add_argument("map", type=Path)
    p_opt.add_argument("--merge", type=float, required=True)
    p_opt.add_argument("--sparsify", type=float, required=True)
    p_opt.add_argument("--out", type=Path, required=True)
    p_opt.set_defaults(func=cmd_optimize)

    p_export = sub.add_parser("export", help="export a map for visualization")
    p_export.add_argument("map", type=Path)
    p_export.add_argument("--format", choices=["dot"], default="dot")
    p_export.add_argument("--out", type=Path)
    p_export.set_defaults(func=cmd_export)

    p_nav = sub.add_parser("navigate", help="offline replay of a stream against a map")
    p_nav.add_argument("map", type=Path)
    p_nav.add_argument("stream", type=Path)
    goal = p_nav.add_mutually_exclusive_group(required=True)
    goal.add_argument("--goal-frame", type=int, help="goal = this frame of the stream")
    goal.add_argument("--goal-file", type=Path, help="goal = descriptor JSON file")
    p_nav.add_argument("--log", type=Path, help="write the episode log (JSONL)")
    _add_common_flags(p_nav)
    p_nav.set_defaults(func=cmd_navigate)

    p_sim = sub.add_parser("sim", help="synthetic-world recording and evaluation")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)

    p_rec = sim_sub.add_parser("record", help="record a teach pass over a route")
    p_rec.add_argument("--route", type=Path, required=True)
    p_rec.add_argument("--out", type=Path, required=True)
    p_rec.add_argument("--stride", type=int, default=1)
    p_rec.add_argument("--poses", type=Path, help="also write the pose trace (CSV)")
    _add_common_flags(p_rec)
    p_rec.set_defaults(func=cmd_sim_record)

    p_ep = sim_sub.add_parser("episode", help="run one closed-loop episode")
    p_ep.add_argument("--route", type=Path, required=True)
    p_ep.add_argument("--map", type=Path, help="reuse a built map instead of rebuilding")
    p_ep.add_argument("--goal-node", default="last")
    p_ep.add_argument("--stride", type=int, default=1)
    p_ep.add_argument("--budget", type=int, default=0, help="step budget (0 = auto)")
    p_ep.add_argument("--perturb", type=float, default=0.0, help="start perturbation radius (m)")
    p_ep.add_argument("--log", type=Path, help="write the episode log (JSONL)")
    _add_common_flags(p_ep)
    p_ep.set_defaults(func=cmd_sim_episode)

    p_eval = sim_sub.add_parser("eval", help="success-rate table over routes")
    p_eval.add_argument("--route", type=Path, action="append", required=True)
    p_eval.add_argument("--episodes", type=int, default=14)
    p_eval.add_argument("--settings", default="default", help="comma list: dense,default,sparse")
    p_eval.add_argument("--stride", type=int, default=1)
    p_eval.add_argument("--perturb", type=float, default=0.3)
    p_eval.add_argument("--out", type=Path)
    _add_common_flags(p_eval)
    p_eval.set_defaults(func=cmd_sim_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, VersionError, NonMonotonicFrameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (BadThresholdsError, DimMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GoalNotInMapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GOAL_NOT_IN_MAP
    except TopoNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main_entry() -> None:  # console-script shim
    raise SystemExit(main())
