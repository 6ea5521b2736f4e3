"""Synthetic closed-loop testbed.

Descriptors are random trigonometric features of the embedded pose
(position over a length scale, heading on a weighted circle), so their
inner products decay smoothly with both travelled distance and heading
change - the two effects the mapping thresholds are built around. Ground
truth poses exist only here, to generate views and to score episodes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .builder import build_from_stream
from .descriptors import ObservationDescriptors, ThresholdConfig, cosine_similarity, normalize
from .errors import FormatError, UnreachableWaypointError
from .graph import TopologicalMap
from .navigator import (
    NEED_ROTATION,
    Action,
    NeedRotation,
    Phase,
    StepOutcome,
    start_navigation,
)


def wrap_angle(theta: float) -> float:
    """Wrap into [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class KinematicParams:
    step_length: float = 0.25
    turn_angle: float = math.radians(15.0)
    combo_turn_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.step_length <= 0:
            raise ValueError("step_length must be positive")
        if not 0 < self.turn_angle < math.pi / 2:
            raise ValueError("turn_angle must lie in (0, pi/2)")
        if not 0 < self.combo_turn_fraction <= 1:
            raise ValueError("combo_turn_fraction must lie in (0, 1]")


def step(pose: Pose, action: Action, kin: KinematicParams) -> Pose:
    """Apply one discrete action. Translations use the pre-turn heading."""
    if action is Action.NO_ACTION:
        return pose
    if action is Action.FORWARD:
        return Pose(
            pose.x + kin.step_length * math.cos(pose.theta),
            pose.y + kin.step_length * math.sin(pose.theta),
            pose.theta,
        )
    if action is Action.LEFT:
        return Pose(pose.x, pose.y, pose.theta + kin.turn_angle)
    if action is Action.RIGHT:
        return Pose(pose.x, pose.y, pose.theta - kin.turn_angle)
    if action is Action.ROTATE_SEARCH:
        return Pose(pose.x, pose.y, pose.theta + kin.turn_angle)
    if action in (Action.FORWARD_LEFT, Action.FORWARD_RIGHT):
        sign = 1.0 if action is Action.FORWARD_LEFT else -1.0
        return Pose(
            pose.x + kin.step_length * math.cos(pose.theta),
            pose.y + kin.step_length * math.sin(pose.theta),
            pose.theta + sign * kin.turn_angle * kin.combo_turn_fraction,
        )
    raise ValueError(f"unhandled action {action}")


class SimWorld:
    """Pose-conditioned descriptor generator, deterministic per seed."""

    def __init__(
        self,
        seed: int = 0,
        dim: int = 512,
        length_scale: float = 3.0,
        heading_weight: float = 1.5,
        segment_offset: float = 0.378,
        segment_lookahead: float = 1.5,
        noise_std: float = 0.0,
    ):
        if dim < 2 or dim % 2 != 0:
            raise ValueError("dim must be an even integer >= 2")
        if length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if heading_weight < 0 or noise_std < 0 or segment_lookahead < 0:
            raise ValueError("heading_weight, segment_lookahead and noise_std must be non-negative")
        self.seed = seed
        self.dim = dim
        self.length_scale = length_scale
        self.heading_weight = heading_weight
        self.segment_offset = segment_offset
        self.segment_lookahead = segment_lookahead
        self.noise_std = noise_std
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((dim // 2, 4))
        self._phase = rng.uniform(0.0, 2.0 * math.pi, dim // 2)

    def _embed(self, pose: Pose) -> np.ndarray:
        return np.array(
            [
                pose.x / self.length_scale,
                pose.y / self.length_scale,
                self.heading_weight * math.cos(pose.theta),
                self.heading_weight * math.sin(pose.theta),
            ]
        )

    def _view(self, pose: Pose) -> np.ndarray:
        z = self._projection @ self._embed(pose) + self._phase
        raw = np.concatenate([np.cos(z), np.sin(z)])
        if self.noise_std > 0:
            # Noise is a pure function of (seed, pose) so replays stay exact.
            entropy = [self.seed & 0xFFFFFFFF] + [
                int(np.float64(v).view(np.uint64)) for v in (pose.x, pose.y, pose.theta)
            ]
            noise_rng = np.random.default_rng(entropy)
            raw = raw + noise_rng.normal(0.0, self.noise_std, raw.size)
        return normalize(raw)

    def _segment(self, pose: Pose, offset: float) -> np.ndarray:
        # A segment descriptor summarizes the scene CONTENT in its viewing
        # direction: the view from a point advanced by the look-ahead
        # distance along that direction. The positional shift is what lets
        # segment votes sense lateral displacement from the taught path,
        # not just heading error.
        heading = pose.theta + offset
        return self._view(
            Pose(
                pose.x + self.segment_lookahead * math.cos(heading),
                pose.y + self.segment_lookahead * math.sin(heading),
                heading,
            )
        )

    def descriptor_at(self, pose: Pose, frame_index: int = 0) -> ObservationDescriptors:
        """Full view plus content descriptors for the three view segments."""
        full = self._view(pose)
        return ObservationDescriptors(
            frame_index=frame_index,
            full=full,
            left=self._segment(pose, self.segment_offset),
            middle=self._segment(pose, 0.0),
            right=self._segment(pose, -self.segment_offset),
        )


# ---------------------------------------------------------------------------
# Teach pass: waypoint following and frame recording
# ---------------------------------------------------------------------------

@dataclass
class TeachRun:
    """Recorded teach pass: descriptor frames and the pose each was taken at."""

    frames: list[ObservationDescriptors]
    poses: list[Pose]

    def pose_of_frame(self, frame_index: int) -> Pose:
        for frame, pose in zip(self.frames, self.poses):
            if frame.frame_index == frame_index:
                return pose
        raise KeyError(f"no recorded frame {frame_index}")


def record_trajectory(
    world: SimWorld,
    waypoints: Sequence[tuple[float, float]],
    kin: KinematicParams,
    frame_stride: int = 1,
    step_budget: int = 20000,
) -> TeachRun:
    """Drive a turn-then-advance follower through the waypoints, recording
    a descriptor frame every ``frame_stride`` steps (frame index = step index)."""
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    if frame_stride < 1:
        raise ValueError("frame_stride must be >= 1")
    start = waypoints[0]
    first = waypoints[1]
    pose = Pose(start[0], start[1], math.atan2(first[1] - start[1], first[0] - start[0]))
    frames: list[ObservationDescriptors] = []
    poses: list[Pose] = []
    step_count = 0
    for target in waypoints[1:]:
        while math.hypot(target[0] - pose.x, target[1] - pose.y) > kin.step_length:
            if step_count % frame_stride == 0:
                frames.append(world.descriptor_at(pose, frame_index=step_count))
                poses.append(pose)
            heading_err = wrap_angle(
                math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.theta
            )
            if abs(heading_err) >= kin.turn_angle:
                action = Action.LEFT if heading_err > 0 else Action.RIGHT
            else:
                action = Action.FORWARD
            pose = step(pose, action, kin)
            step_count += 1
            if step_count > step_budget:
                raise UnreachableWaypointError(
                    f"waypoint {target} not reached within {step_budget} steps"
                )
    if step_count % frame_stride == 0:
        frames.append(world.descriptor_at(pose, frame_index=step_count))
        poses.append(pose)
    return TeachRun(frames=frames, poses=poses)


# ---------------------------------------------------------------------------
# Closed-loop episodes
# ---------------------------------------------------------------------------

@dataclass
class EpisodeReport:
    success: bool
    goal_reached: bool
    steps: int
    relocalizations: int
    final_pose_error: float
    action_trace: list[Action] = field(repr=False, default_factory=list)
    pose_trace: list[Pose] = field(repr=False, default_factory=list)
    outcomes: list[StepOutcome] = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        return {
            "success": self.success,
            "goal_reached": self.goal_reached,
            "steps": self.steps,
            "relocalizations": self.relocalizations,
            "final_pose_error": round(self.final_pose_error, 6),
        }


def run_episode(
    world: SimWorld,
    topo_map: TopologicalMap,
    start: Pose,
    goal_node: int,
    config: ThresholdConfig,
    kin: KinematicParams,
    budget: int,
    goal_pose: Pose,
    goal_radius: float = 1.0,
    low_confidence_budget: int = 10,
    reloc_failure_budget: int = 8,
) -> EpisodeReport:
    """Observe -> step the navigator -> move, until the goal, a failure, or
    the step budget. Success needs both the navigator's goal event and
    metric proximity to the goal node's teach pose."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    goal_descriptor = topo_map.node(goal_node).descriptor
    pose = start
    actions: list[Action] = []
    poses = [pose]
    outcomes: list[StepOutcome] = []
    steps = 0

    nav = None
    rotation_budget = int(math.ceil(2.0 * math.pi / kin.turn_angle)) + 2
    for _ in range(rotation_budget):
        if steps >= budget:
            break
        obs = world.descriptor_at(pose)
        result = start_navigation(
            topo_map,
            goal_descriptor,
            obs.full,
            config,
            low_confidence_budget=low_confidence_budget,
            reloc_failure_budget=reloc_failure_budget,
        )
        if isinstance(result, NeedRotation):
            pose = step(pose, Action.ROTATE_SEARCH, kin)
            actions.append(Action.ROTATE_SEARCH)
            poses.append(pose)
            steps += 1
            continue
        nav = result
        break

    if nav is not None:
        while steps < budget and nav.phase in (Phase.NAVIGATING, Phase.RELOCALIZING):
            obs = world.descriptor_at(pose)
            outcome = nav.step(obs)
            outcomes.append(outcome)
            actions.append(outcome.action)
            pose = step(pose, outcome.action, kin)
            poses.append(pose)
            steps += 1

    goal_reached = nav is not None and nav.phase is Phase.REACHED
    final_error = pose.distance_to(goal_pose)
    return EpisodeReport(
        success=goal_reached and final_error <= goal_radius,
        goal_reached=goal_reached,
        steps=steps,
        relocalizations=0 if nav is None else nav.relocalization_count,
        final_pose_error=final_error,
        action_trace=actions,
        pose_trace=poses,
        outcomes=outcomes,
    )


# ---------------------------------------------------------------------------
# Routes and the evaluation harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RouteSpec:
    name: str
    waypoints: tuple[tuple[float, float], ...]
    difficulty: str = "easy"

    @classmethod
    def from_dict(cls, data: dict) -> "RouteSpec":
        if not isinstance(data, dict) or "waypoints" not in data:
            raise FormatError("route spec needs a 'waypoints' field")
        waypoints = data["waypoints"]
        if not isinstance(waypoints, list) or len(waypoints) < 2:
            raise FormatError("route spec needs at least two waypoints")
        try:
            points = tuple((float(p[0]), float(p[1])) for p in waypoints)
        except (TypeError, ValueError, IndexError) as exc:
            raise FormatError("route waypoints must be [x, y] pairs") from exc
        difficulty = data.get("difficulty", "easy")
        if difficulty not in ("easy", "moderate", "hard"):
            raise FormatError(f"unknown difficulty {difficulty!r}")
        return cls(name=str(data.get("name", "route")), waypoints=points, difficulty=difficulty)


def load_route(path: str | Path) -> RouteSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"route file: invalid JSON at line {exc.lineno}") from exc
    return RouteSpec.from_dict(data)


# Threshold overrides implementing named map-sparsity settings. Each setting
# bundles the map-building gates with confirmation thresholds scaled to the
# resulting node spacing: dense maps confirm nodes at close range (so the
# fixed switching threshold lags the robot and node misses surface as
# relocalizations), sparse maps confirm at the range their spacing implies.
SPARSITY_SETTINGS: dict[str, dict] = {
    "dense": {
        "t_interval": 1,
        "t_add_new_node": 0.90,
        "t_loop_closure": 0.95,
        "t_milestone": 0.88,
        "match_window_ahead": 4,
    },
    "default": {},
    "sparse": {
        "t_interval": 9,
        "t_add_new_node": 0.45,
        "t_change_node": 0.45,
        "t_milestone": 0.45,
    },
}


def sparsity_config(base: ThresholdConfig, setting: str) -> ThresholdConfig:
    if setting not in SPARSITY_SETTINGS:
        raise ValueError(f"unknown sparsity setting {setting!r}")
    return replace(base, **SPARSITY_SETTINGS[setting])


@dataclass(frozen=True)
class EvalRow:
    route: str
    sparsity_setting: str
    episodes: int
    sr: float
    mean_steps: float
    mean_relocalizations: float


def perturbed_start(base: Pose, radius: float, rng: np.random.Generator) -> Pose:
    """Uniform position perturbation within the given radius, heading kept."""
    if radius <= 0:
        return base
    angle = rng.uniform(0.0, 2.0 * math.pi)
    r = radius * math.sqrt(rng.uniform(0.0, 1.0))
    return Pose(base.x + r * math.cos(angle), base.y + r * math.sin(angle), base.theta)


def evaluate_route(
    route: RouteSpec,
    setting: str,
    episodes: int,
    seed: int,
    base_config: ThresholdConfig,
    kin: KinematicParams,
    world_kwargs: dict | None = None,
    frame_stride: int = 1,
    perturb_radius: float = 0.3,
    budget_factor: int = 8,
    goal_radius: float = 1.0,
) -> EvalRow:
    """Teach, build at the given sparsity setting, then run scored episodes."""
    config = sparsity_config(base_config, setting)
    world = SimWorld(seed=seed, **(world_kwargs or {}))
    teach = record_trajectory(world, route.waypoints, kin, frame_stride=frame_stride)
    topo_map, _ = build_from_stream(teach.frames, config)
    goal_node = len(topo_map) - 1
    goal_pose = teach.pose_of_frame(topo_map.node(goal_node).frame_index)
    budget = budget_factor * len(teach.poses) * frame_stride
    successes = 0
    total_steps = 0
    total_relocs = 0
    for episode in range(episodes):
        rng = np.random.default_rng([seed, episode])
        start = perturbed_start(teach.poses[0], perturb_radius, rng)
        report = run_episode(
            world,
            topo_map,
            start,
            goal_node,
            config,
            kin,
            budget=budget,
            goal_pose=goal_pose,
            goal_radius=goal_radius,
        )
        successes += int(report.success)
        total_steps += report.steps
        total_relocs += report.relocalizations
    return EvalRow(
        route=route.name,
        sparsity_setting=setting,
        episodes=episodes,
        sr=successes / episodes,
        mean_steps=total_steps / episodes,
        mean_relocalizations=total_relocs / episodes,
    )


def eval_suite(
    routes: Sequence[RouteSpec],
    episodes: int,
    seed: int,
    base_config: ThresholdConfig,
    kin: KinematicParams,
    settings: Sequence[str] = ("default",),
    **route_kwargs,
) -> list[EvalRow]:
    """One row per (route, sparsity setting); fully deterministic per seed."""
    if not routes:
        raise ValueError("need at least one route")
    rows = []
    for route_index, route in enumerate(routes):
        for setting in settings:
            rows.append(
                evaluate_route(
                    route,
                    setting,
                    episodes,
                    seed + route_index,
                    base_config,
                    kin,
                    **route_kwargs,
                )
            )
    return rows


def rows_to_csv(rows: Sequence[EvalRow], config: ThresholdConfig) -> str:
    """Render the SR table with the effective config echoed for provenance."""
    out = io.StringIO()
    out.write("# config " + json.dumps(config.to_dict(), separators=(",", ":")) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["route", "sparsity_setting", "episodes", "sr", "mean_steps", "mean_relocalizations"]
    )
    for row in rows:
        writer.writerow(
            [
                row.route,
                row.sparsity_setting,
                row.episodes,
                f"{row.sr:.4f}",
                f"{row.mean_steps:.2f}",
                f"{row.mean_relocalizations:.3f}",
            ]
        )
    return out.getvalue()


def poses_to_csv(poses: Sequence[Pose], frame_indices: Sequence[int] | None = None) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["frame", "x", "y", "theta"])
    for i, pose in enumerate(poses):
        frame = frame_indices[i] if frame_indices is not None else i
        writer.writerow([frame, f"{pose.x:.6f}", f"{pose.y:.6f}", f"{pose.theta:.6f}"])
    return out.getvalue()
