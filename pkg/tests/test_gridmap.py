import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsenav.core import BoundsError, ConfigError, ObservationError, Pose
from fsenav.gridmap import MapConfig, SemanticMap, new_map
from fsenav.simworld import Observation, SensorConfig

ONE_RAY = SensorConfig(num_rays=1, fov_deg=0.0, max_range=5.0)


def scan(ranges, labels, pose):
    return Observation(np.asarray(ranges, float), np.asarray(labels, np.int64), pose, -1)


def test_new_map_origin_and_zero():
    m = new_map(MapConfig(size_cells=480, resolution=0.05), Pose(0.0, 0.0, 0.0))
    assert m.origin == pytest.approx((-12.0, -12.0))
    assert not m.channels.any()
    assert m.world_to_cell(Pose(0.0, 0.0)) == (240, 240)


def test_channel_count():
    cfg = MapConfig(num_semantic=13)
    assert cfg.num_channels == 15
    assert new_map(cfg, Pose(0, 0)).channels.shape[0] == 15


def test_default_map_side_is_24m():
    cfg = MapConfig()
    assert cfg.size_cells * cfg.resolution == pytest.approx(24.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(size_cells=0), dict(resolution=0.0), dict(crop_cells=500), dict(crop_cells=240, downsample_factor=7)],
)
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        MapConfig(**kwargs)


def test_world_to_cell_examples():
    m = new_map(MapConfig(), Pose(0, 0))
    assert m.world_to_cell((0.0, 0.0)) == (240, 240)
    assert m.world_to_cell((-12.0, -12.0)) == (0, 0)
    assert m.world_to_cell((-11.90, -12.0)) == (2, 0)
    with pytest.raises(BoundsError):
        m.world_to_cell((12.0, 0.0))


@given(st.floats(-11.99, 11.99), st.floats(-11.99, 11.99))
def test_cell_round_trip(x, y):
    m = new_map(MapConfig(), Pose(0, 0))
    cx, cy = m.cell_to_world(m.world_to_cell((x, y)))
    assert math.hypot(cx - x, cy - y) <= m.resolution * math.sqrt(2) / 2 + 1e-9


def test_single_ray_hit_one_metre():
    m = new_map(MapConfig(), Pose(0, 0))
    pose = Pose(0.0, 0.0, 0.0)
    m.integrate_observation(scan([1.0], [1], pose), pose, ONE_RAY)
    row = 240
    ahead_free = [c for c in range(241, 270) if m.explored[c, row] and not m.obstacle[c, row]]
    assert ahead_free == list(range(241, 260))
    assert m.obstacle[260, row] == 1 and m.explored[260, row] == 1
    assert m.obstacle.sum() == 1


def test_semantic_hit_sets_channel():
    m = new_map(MapConfig(), Pose(0, 0))
    pose = Pose(0.0, 0.0, 0.0)
    # scene code 2 + 0 is "chair"
    m.integrate_observation(scan([1.0], [2], pose), pose, ONE_RAY)
    assert m.semantic(0)[260, 240] == 1
    assert m.channels[2].sum() == 1


def test_no_return_ray_marks_explored_only():
    m = new_map(MapConfig(), Pose(0, 0))
    pose = Pose(0.0, 0.0, 0.0)
    m.integrate_observation(scan([5.0], [0], pose), pose, ONE_RAY)
    assert m.obstacle.sum() == 0
    assert m.explored.sum() == 100


def test_ray_count_mismatch():
    m = new_map(MapConfig(), Pose(0, 0))
    pose = Pose(0.0, 0.0, 0.0)
    with pytest.raises(ObservationError):
        m.integrate_observation(scan([1.0, 1.0], [0, 0], pose), pose, ONE_RAY)


def test_crop_shape_and_zero():
    cfg = MapConfig(crop_cells=240, downsample_factor=8)
    m = new_map(cfg, Pose(0, 0))
    x = m.crop_egocentric(np.zeros((4, cfg.size_cells, cfg.size_cells)), Pose(0, 0))
    assert x.shape == (cfg.num_channels + 4, 30, 30)
    assert not x.any()


def test_crop_pads_at_corner():
    cfg = MapConfig(size_cells=64, crop_cells=32, downsample_factor=1, num_semantic=1)
    m = SemanticMap(cfg, (0.0, 0.0), np.ones((3, 64, 64), np.uint8))
    x = m.crop_egocentric(np.zeros((4, 64, 64)), Pose(0.01, 0.01))
    # agent in cell (0, 0) sits at the window centre; rows/cols before it are off-map
    assert not x[:3, :16, :].any() and not x[:3, :, :16].any()
    assert x[:3, 16:, 16:].all()


def _random_scan(rng, sensor):
    ranges = rng.uniform(0.05, sensor.max_range, sensor.num_rays)
    labels = rng.integers(0, 6, sensor.num_rays)
    ranges[labels == 0] = sensor.max_range
    return ranges, labels


@given(st.integers(0, 2**32 - 1))
def test_monotone_semantic_implies_explored(seed):
    rng = np.random.default_rng(seed)
    sensor = SensorConfig(num_rays=32)
    m = new_map(MapConfig(size_cells=240, num_semantic=4), Pose(0, 0))
    prev = m.channels.copy()
    for _ in range(5):
        pose = Pose(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
        r, l = _random_scan(rng, sensor)
        m.integrate_observation(scan(r, l, pose), pose, sensor)
        assert (m.channels >= prev).all()
        assert not (m.channels[2:].any(axis=0) & (m.explored == 0)).any()
        prev = m.channels.copy()


@given(st.integers(0, 2**32 - 1))
def test_repeat_observation_idempotent(seed):
    rng = np.random.default_rng(seed)
    sensor = SensorConfig(num_rays=16)
    m = new_map(MapConfig(size_cells=240, num_semantic=4), Pose(0, 0))
    pose = Pose(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi))
    obs = scan(*_random_scan(rng, sensor), pose)
    m.integrate_observation(obs, pose, sensor)
    once = m.channels.copy()
    m.integrate_observation(obs, pose, sensor)
    assert (m.channels == once).all()
