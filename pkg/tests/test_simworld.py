import math

import numpy as np
import pytest

from toponav import (
    Action,
    KinematicParams,
    Pose,
    SimWorld,
    ThresholdConfig,
    build_from_stream,
    cosine_similarity,
    eval_suite,
    localize,
    record_trajectory,
    run_episode,
    step,
    wrap_angle,
)
from toponav.errors import UnreachableWaypointError
from toponav.simworld import (
    RouteSpec,
    perturbed_start,
    poses_to_csv,
    rows_to_csv,
    sparsity_config,
)

KIN = KinematicParams()
CFG = ThresholdConfig()


# ---------------------------------------------------------------------------
# Pose and kinematics
# ---------------------------------------------------------------------------

def test_pose_wraps_theta():
    assert Pose(0, 0, math.pi).theta == pytest.approx(-math.pi)
    assert Pose(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
    assert wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)


def test_step_forward():
    out = step(Pose(0, 0, 0), Action.FORWARD, KIN)
    assert (out.x, out.y, out.theta) == pytest.approx((0.25, 0.0, 0.0))


def test_step_turns_in_place():
    left = step(Pose(0, 0, 0), Action.LEFT, KIN)
    assert (left.x, left.y) == (0.0, 0.0)
    assert left.theta == pytest.approx(math.radians(15.0))
    right = step(Pose(0, 0, 0), Action.RIGHT, KIN)
    assert right.theta == pytest.approx(-math.radians(15.0))
    rot = step(Pose(0, 0, 0), Action.ROTATE_SEARCH, KIN)
    assert rot.theta == pytest.approx(math.radians(15.0))


def test_step_forward_left_translates_along_old_heading():
    out = step(Pose(0, 0, 0), Action.FORWARD_LEFT, KIN)
    # translation uses the pre-turn heading; the turn is half a step turn
    assert (out.x, out.y) == pytest.approx((0.25, 0.0))
    assert out.theta == pytest.approx(math.radians(7.5))
    out2 = step(Pose(0, 0, 0), Action.FORWARD_RIGHT, KIN)
    assert out2.theta == pytest.approx(-math.radians(7.5))


def test_step_no_action_is_identity():
    pose = Pose(1.0, 2.0, 0.5)
    assert step(pose, Action.NO_ACTION, KIN) == pose


def test_step_never_moves_farther_than_step_length(rng):
    for _ in range(200):
        pose = Pose(*rng.uniform(-5, 5, 2), float(rng.uniform(-4, 4)))
        action = list(Action)[int(rng.integers(0, len(Action)))]
        moved = step(pose, action, KIN)
        assert pose.distance_to(moved) <= KIN.step_length + 1e-12


# ---------------------------------------------------------------------------
# Descriptor generator
# ---------------------------------------------------------------------------

def test_descriptor_deterministic_per_seed():
    w1, w2 = SimWorld(seed=5), SimWorld(seed=5)
    pose = Pose(1.2, -0.4, 0.3)
    a, b = w1.descriptor_at(pose), w2.descriptor_at(pose)
    assert np.array_equal(a.full, b.full)
    assert np.array_equal(a.left, b.left)
    assert cosine_similarity(a.full, b.full) == pytest.approx(1.0, abs=1e-12)
    different = SimWorld(seed=6).descriptor_at(pose)
    assert not np.array_equal(a.full, different.full)


def test_descriptor_noise_is_still_deterministic():
    w = SimWorld(seed=5, noise_std=0.3)
    pose = Pose(0.5, 0.5, 1.0)
    assert np.array_equal(w.descriptor_at(pose).full, w.descriptor_at(pose).full)
    clean = SimWorld(seed=5).descriptor_at(pose)
    assert not np.array_equal(w.descriptor_at(pose).full, clean.full)


def test_descriptor_similarity_symmetric():
    w = SimWorld(seed=9)
    a = w.descriptor_at(Pose(0, 0, 0)).full
    b = w.descriptor_at(Pose(2, 1, 0.5)).full
    assert cosine_similarity(a, b) == cosine_similarity(b, a)


def test_far_poses_are_dissimilar_on_average():
    # Monte-Carlo estimate: poses >= 10 length scales apart.
    sims = []
    for seed in range(100):
        w = SimWorld(seed=seed)
        a = w.descriptor_at(Pose(0, 0, 0)).full
        b = w.descriptor_at(Pose(10 * w.length_scale + 1, 0, 0)).full
        sims.append(abs(cosine_similarity(a, b)))
    assert np.mean(sims) <= 0.2


def test_opposite_heading_drops_below_node_threshold():
    sims = []
    for seed in range(100):
        w = SimWorld(seed=seed)
        a = w.descriptor_at(Pose(0, 0, 0)).full
        b = w.descriptor_at(Pose(0, 0, math.pi)).full
        sims.append(cosine_similarity(a, b))
    assert np.mean(sims) < CFG.t_add_new_node


def test_similarity_decays_with_distance_on_average():
    distances = np.linspace(0.0, 10.0, 21)
    means = []
    for d in distances:
        vals = [
            cosine_similarity(
                SimWorld(seed=s, dim=128).descriptor_at(Pose(0, 0, 0)).full,
                SimWorld(seed=s, dim=128).descriptor_at(Pose(d, 0, 0)).full,
            )
            for s in range(50)
        ]
        means.append(np.mean(vals))
    violations = sum(b > a + 1e-9 for a, b in zip(means, means[1:]))
    assert violations <= math.ceil(0.02 * (len(means) - 1))


# ---------------------------------------------------------------------------
# Teach pass recorder
# ---------------------------------------------------------------------------

def test_straight_line_recording():
    w = SimWorld(seed=1)
    teach = record_trajectory(w, [(0.0, 0.0), (5.0, 0.0)], KIN, frame_stride=1)
    xs = [p.x for p in teach.poses]
    assert xs == sorted(xs)
    assert all(p.theta == pytest.approx(0.0) for p in teach.poses)
    assert 18 <= len(teach.frames) <= 22
    indices = [f.frame_index for f in teach.frames]
    assert indices == sorted(indices)
    assert all(b - a == 1 for a, b in zip(indices, indices[1:]))


def test_recording_stride_arithmetic():
    w = SimWorld(seed=1)
    teach = record_trajectory(w, [(0.0, 0.0), (75.0, 0.0)], KIN, frame_stride=30)
    # 75 m at 0.25 m/step is 300 steps -> frames at 0, 30, ..., 270 (+ final)
    assert 10 <= len(teach.frames) <= 11
    indices = [f.frame_index for f in teach.frames]
    assert all(i % 30 == 0 for i in indices)
    assert all(b - a == 30 for a, b in zip(indices, indices[1:]))


def test_square_loop_returns_to_start():
    w = SimWorld(seed=1)
    teach = record_trajectory(w, [(0, 0), (6, 0), (6, 6), (0, 6), (0, 0)], KIN)
    final = teach.poses[-1]
    assert math.hypot(final.x, final.y) <= 2 * KIN.step_length


def test_waypoint_budget_enforced():
    w = SimWorld(seed=1)
    with pytest.raises(UnreachableWaypointError):
        record_trajectory(w, [(0.0, 0.0), (100.0, 0.0)], KIN, step_budget=10)


def test_localization_from_recorded_poses():
    # Teach-pass self-consistency: at least 95% of nodes localize to
    # themselves when queried from their own recorded pose.
    w = SimWorld(seed=3)
    teach = record_trajectory(w, [(0, 0), (8, 0), (8, 6), (14, 6)], KIN)
    topo_map, _ = build_from_stream(teach.frames, CFG)
    hits = 0
    for node in topo_map.nodes:
        pose = teach.pose_of_frame(node.frame_index)
        result = localize(w.descriptor_at(pose).full, topo_map, CFG.t_milestone)
        hits += result.matched and result.node_id == node.id
    assert hits / len(topo_map) >= 0.95


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

def build_route(seed, waypoints):
    w = SimWorld(seed=seed)
    teach = record_trajectory(w, waypoints, KIN)
    topo_map, _ = build_from_stream(teach.frames, CFG)
    goal = len(topo_map) - 1
    goal_pose = teach.pose_of_frame(topo_map.node(goal).frame_index)
    return w, teach, topo_map, goal, goal_pose


def test_episode_starting_at_goal_is_trivial():
    w, teach, topo_map, goal, goal_pose = build_route(4, [(0, 0), (10, 0)])
    report = run_episode(w, topo_map, goal_pose, goal, CFG, KIN, budget=50, goal_pose=goal_pose)
    assert report.goal_reached
    assert report.success
    assert report.steps <= 5
    assert report.final_pose_error <= 0.2


def test_episode_budget_exhaustion_is_a_report():
    w, teach, topo_map, goal, goal_pose = build_route(4, [(0, 0), (10, 0)])
    report = run_episode(
        w, topo_map, teach.poses[0], goal, CFG, KIN, budget=1, goal_pose=goal_pose
    )
    assert not report.success
    assert report.steps == 1


def test_episode_easy_route_succeeds_within_step_bound():
    w, teach, topo_map, goal, goal_pose = build_route(4, [(0, 0), (10, 0)])
    budget = 4 * len(teach.poses)
    report = run_episode(
        w, topo_map, teach.poses[0], goal, CFG, KIN, budget=budget, goal_pose=goal_pose
    )
    assert report.success
    assert report.steps <= budget
    # goal event implies milestone-level similarity at the final observation
    final_obs = w.descriptor_at(report.pose_trace[-1]).full
    assert cosine_similarity(final_obs, topo_map.node(goal).descriptor) > CFG.t_milestone


def test_episode_traces_are_reproducible():
    w, teach, topo_map, goal, goal_pose = build_route(4, [(0, 0), (10, 0)])
    a = run_episode(w, topo_map, teach.poses[0], goal, CFG, KIN, 300, goal_pose)
    b = run_episode(w, topo_map, teach.poses[0], goal, CFG, KIN, 300, goal_pose)
    assert a.action_trace == b.action_trace
    assert a.pose_trace == b.pose_trace
    assert a.summary() == b.summary()


# ---------------------------------------------------------------------------
# Routes and the eval harness
# ---------------------------------------------------------------------------

def test_route_spec_parsing(tmp_path):
    import json

    path = tmp_path / "route.json"
    path.write_text(json.dumps({"name": "r", "waypoints": [[0, 0], [5, 0]], "difficulty": "easy"}))
    from toponav.simworld import load_route

    route = load_route(path)
    assert route.name == "r"
    assert route.waypoints == ((0.0, 0.0), (5.0, 0.0))

    from toponav.errors import FormatError

    with pytest.raises(FormatError):
        RouteSpec.from_dict({"waypoints": [[0, 0]]})
    with pytest.raises(FormatError):
        RouteSpec.from_dict({"waypoints": [[0, 0], [1, 0]], "difficulty": "extreme"})


def test_sparsity_settings_are_valid_configs():
    for name in ("dense", "default", "sparse"):
        sparsity_config(CFG, name).validate()
    with pytest.raises(ValueError):
        sparsity_config(CFG, "bogus")


def test_eval_suite_single_route_all_success():
    route = RouteSpec(name="easy10", waypoints=((0.0, 0.0), (10.0, 0.0)))
    rows = eval_suite([route], episodes=4, seed=5, base_config=CFG, kin=KIN)
    assert len(rows) == 1
    assert rows[0].route == "easy10"
    assert rows[0].episodes == 4
    assert rows[0].sr == 1.0


def test_eval_suite_deterministic_csv():
    route = RouteSpec(name="easy10", waypoints=((0.0, 0.0), (10.0, 0.0)))
    rows1 = eval_suite([route], episodes=3, seed=9, base_config=CFG, kin=KIN,
                       settings=("dense", "default"))
    rows2 = eval_suite([route], episodes=3, seed=9, base_config=CFG, kin=KIN,
                       settings=("dense", "default"))
    assert rows_to_csv(rows1, CFG) == rows_to_csv(rows2, CFG)
    assert len(rows1) == 2


def test_pose_csv_shape():
    text = poses_to_csv([Pose(0, 0, 0), Pose(1, 0, 0.5)], [0, 30])
    lines = text.strip().splitlines()
    assert lines[0] == "frame,x,y,theta"
    assert len(lines) == 3
    assert lines[1].startswith("0,")
    assert lines[2].startswith("30,")


def test_perturbed_start_stays_within_radius(rng):
    base = Pose(1.0, 2.0, 0.3)
    for _ in range(100):
        p = perturbed_start(base, 0.3, rng)
        assert base.distance_to(p) <= 0.3 + 1e-12
        assert p.theta == base.theta
