import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dijkstra8
from fsenav.core import Action, ArgumentError, DataError, Pose, ProtocolError, StateError
from fsenav.planner import fmm_field
from fsenav.simworld import (
    DEFAULT_CATEGORIES,
    FREE,
    OBJECT0,
    WALL,
    AgentConfig,
    AgentState,
    Scene,
    SceneConfig,
    SensorConfig,
    TargetGeometry,
    disc_collides,
    generate_episodes,
    generate_scene,
    load_episodes,
    load_scene,
    observe,
    sample_episode,
    save_episodes,
    save_scene,
    step,
)

SMALL = SceneConfig(world_size=12.0, rooms_min=3, rooms_max=4)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SMALL, 3)


def box_scene(n=80, res=0.05):
    g = np.zeros((n, n), np.uint8)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = WALL
    return Scene(g, res, DEFAULT_CATEGORIES, "box", 0)


def test_generation_deterministic():
    a, b = generate_scene(SMALL, 7), generate_scene(SMALL, 7)
    assert a.grid.tobytes() == b.grid.tobytes()


def test_goal_categories_present_and_reachable(scene):
    for k in range(SMALL.num_goal_categories):
        assert scene.has_category(k)
    g = scene.grid
    assert (g[0] == WALL).all() and (g[-1] == WALL).all() and (g[:, 0] == WALL).all() and (g[:, -1] == WALL).all()
    free = g == FREE
    start = tuple(np.argwhere(free)[0])
    f = fmm_field(free | (g >= OBJECT0), [start], scene.resolution)
    objs = np.argwhere(g >= OBJECT0)
    assert np.isfinite(f.values[objs[:, 0], objs[:, 1]]).all()


def test_episode_length_rule_and_oracle(scene):
    agent = AgentConfig()
    geo = TargetGeometry(scene, 3, agent)
    ep = sample_episode(scene, 3, seed=11, agent=agent, geometry=geo)
    assert ep.optimal_length >= 1.0
    assert ep == sample_episode(scene, 3, seed=11, agent=agent, geometry=geo)
    cell = scene.world_to_cell(ep.start.x, ep.start.y)
    assert geo.clearance[cell]
    ref = dijkstra8(geo.clearance, np.argwhere(geo.success_region), scene.resolution)[cell]
    euclid = min(
        math.hypot(r - cell[0], c - cell[1]) * scene.resolution for r, c in np.argwhere(geo.success_region)
    )
    assert euclid - 1e-9 <= ep.optimal_length <= ref + 1e-6


def test_sample_missing_category():
    s = box_scene()
    with pytest.raises(ArgumentError):
        sample_episode(s, "chair", 0)


def test_generate_episodes_deterministic(scene):
    a = generate_episodes(scene, 4, seed=2)
    assert a == generate_episodes(scene, 4, seed=2)
    assert all(e.optimal_length >= 1.0 for e in a)


def test_observe_wall_distance():
    s = box_scene()
    # inner wall face at x = 3.0 m; agent 1.0 m before it facing +x
    s.grid[60, :] = WALL
    sensor = SensorConfig(num_rays=3, fov_deg=90.0)
    obs = observe(s, Pose(2.0, 2.0, 0.0), sensor)
    assert obs.ranges[1] == pytest.approx(1.0, abs=s.resolution / 2)
    assert obs.labels[1] == WALL


def test_observe_open_space():
    g = np.zeros((400, 400), np.uint8)
    s = Scene(g, 0.05, DEFAULT_CATEGORIES)
    obs = observe(s, Pose(10.0, 10.0, 0.3))
    assert (obs.ranges == 5.0).all() and (obs.labels == 0).all()


def test_observe_chair_label():
    s = box_scene()
    s.grid[50:54, 38:42] = OBJECT0 + 0
    obs = observe(s, Pose(1.0, 2.0, 0.0), SensorConfig(num_rays=3))
    assert obs.labels[1] == OBJECT0 + DEFAULT_CATEGORIES.index("chair")


def test_observe_inside_wall():
    with pytest.raises(StateError):
        observe(box_scene(), Pose(0.01, 0.01, 0.0))


def _target_scene():
    s = box_scene()
    s.grid[40, 40] = OBJECT0 + 3
    return s


def test_stop_near_target_succeeds():
    s = _target_scene()
    agent = AgentConfig(radius=0.15, success_radius=0.1)
    geo = TargetGeometry(s, 3, agent)
    # body edge 0.05 m from the object face
    state = AgentState(Pose(2.0, 2.025 - 0.2, 0.0))
    out = step(s, state, Action.STOP, agent, geo)
    assert out.done and out.success


def test_stop_far_fails():
    s = _target_scene()
    agent = AgentConfig(success_radius=0.1)
    geo = TargetGeometry(s, 3, agent)
    state = AgentState(Pose(2.0, 2.025 - 0.65, 0.0))
    out = step(s, state, Action.STOP, agent, geo)
    assert out.done and not out.success


def test_timeout_and_protocol():
    s = _target_scene()
    agent = AgentConfig(max_steps=500)
    geo = TargetGeometry(s, 3, agent)
    state = AgentState(Pose(1.0, 1.0, 0.0))
    for _ in range(499):
        assert not step(s, state, Action.TURN_LEFT, agent, geo).done
    out = step(s, state, Action.TURN_LEFT, agent, geo)
    assert out.done and not out.success and out.steps == 500
    with pytest.raises(ProtocolError):
        step(s, state, Action.MOVE_FORWARD, agent, geo)


@given(st.floats(-math.pi, math.pi, exclude_max=True))
def test_turns_reverse_exactly(theta):
    s = _target_scene()
    agent = AgentConfig()
    geo = TargetGeometry(s, 3, agent)
    state = AgentState(Pose(1.0, 1.0, theta))
    before = state.pose
    step(s, state, Action.TURN_LEFT, agent, geo)
    step(s, state, Action.TURN_RIGHT, agent, geo)
    assert state.pose == before


def test_forward_moves_quarter_metre():
    s = box_scene()
    agent = AgentConfig()
    state = AgentState(Pose(1.0, 1.0, 0.0))
    out = step(s, state, Action.MOVE_FORWARD, agent, TargetGeometry(_target_scene(), 3, agent))
    assert not out.collided and out.pose.x == pytest.approx(1.25) and state.path_length == 0.25


@given(st.integers(0, 2**32 - 1))
def test_random_rollout_never_inside_obstacle(seed):
    s = generate_scene(SMALL, 3)
    rng = np.random.default_rng(seed)
    agent = AgentConfig(max_steps=10_000)
    geo = TargetGeometry(s, 3, agent)
    ep = sample_episode(s, 3, int(rng.integers(1 << 30)), agent, geometry=geo)
    state = AgentState(ep.start)
    for a in rng.choice([1, 1, 1, 2, 3], 150):
        step(s, state, Action(int(a)), agent, geo)
        p = state.pose
        assert s.free_at(p.x, p.y)
        assert not disc_collides(s, np.array([[p.x, p.y]]), agent.radius)


def test_observe_pure(scene):
    ep = generate_episodes(scene, 1, 0)[0]
    a, b = observe(scene, ep.start), observe(scene, ep.start)
    assert (a.ranges == b.ranges).all() and (a.labels == b.labels).all()


def test_scene_and_episode_files(tmp_path, scene):
    p = tmp_path / "s.fse"
    save_scene(scene, p)
    assert p.read_bytes()[:4] == b"FSE1"
    back = load_scene(p)
    assert back.grid.tobytes() == scene.grid.tobytes() and back.categories == scene.categories
    eps = generate_episodes(scene, 3, 0)
    save_episodes(eps, {scene.scene_id: scene}, tmp_path / "e.jsonl")
    assert load_episodes(tmp_path / "e.jsonl", {scene.scene_id: scene}) == eps


def test_corrupt_scene_file(tmp_path):
    p = tmp_path / "bad.fse"
    p.write_bytes(b"FSE1\x01\x00")
    with pytest.raises(DataError):
        load_scene(p)
