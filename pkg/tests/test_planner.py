import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dijkstra8, euclid_lb
from fsenav.core import Action, ArgumentError, NoPathError, Pose
from fsenav.planner import descent_path, fmm_field, local_action, select_waypoint, shortest_path_length

RES = 0.05


def random_grid(seed, n=48, p=0.2):
    rng = np.random.default_rng(seed)
    trav = rng.random((n, n)) > p
    cells = np.argwhere(trav)
    return rng, trav, cells


def test_source_is_zero():
    f = fmm_field(np.ones((11, 11), bool), [(5, 5)], RES)
    assert f.at((5, 5)) == 0.0


def test_empty_map_east():
    f = fmm_field(np.ones((201, 201), bool), [(100, 100)], RES)
    assert f.at((100, 200)) == pytest.approx(5.0, rel=0.01)


def test_u_wall_between_bounds():
    trav = np.ones((60, 60), bool)
    trav[20:40, 20] = trav[20:40, 40] = trav[40, 20:41] = False
    src, q = (30, 30), (50, 30)
    v = fmm_field(trav, [src], RES).at(q)
    lb = euclid_lb(trav.shape, [src], RES)[q]
    ub = dijkstra8(trav, [src], RES)[q]
    assert lb <= v <= ub + 1e-6
    assert v > lb + 0.5  # the wall forces a detour


def test_empty_sources_error():
    with pytest.raises(ArgumentError):
        fmm_field(np.ones((5, 5), bool), np.zeros((0, 2), int), RES)


def test_blocked_cells_infinite():
    trav = np.ones((10, 10), bool)
    trav[3, 3] = False
    f = fmm_field(trav, [(0, 0)], RES)
    assert math.isinf(f.at((3, 3)))


def test_shortest_path_examples():
    grid = np.ones((20, 80), bool)
    assert shortest_path_length(grid, (10, 10), [(10, 10)], RES) == 0.0
    assert shortest_path_length(grid, (10, 10), [(10, 70)], RES) == pytest.approx(3.0, rel=0.01)
    walled = grid.copy()
    walled[:, 40] = False
    assert math.isinf(shortest_path_length(walled, (10, 10), [(10, 70)], RES))


@given(st.integers(0, 2**32 - 1))
def test_sandwich_and_lipschitz(seed):
    rng, trav, cells = random_grid(seed)
    src = cells[rng.integers(len(cells))]
    v = fmm_field(trav, [src], RES).values
    lb = euclid_lb(trav.shape, [src], RES)
    ub = dijkstra8(trav, [src], RES)
    fin = np.isfinite(v)
    assert (np.isfinite(ub) == fin).all()
    assert (v[fin] >= lb[fin] - 1e-9).all()
    assert (v[fin] <= ub[fin] + 1e-6).all()
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        a = v[max(dr, 0) :, max(dc, 0) : v.shape[1] + min(dc, 0)]
        b = v[: v.shape[0] - dr, max(-dc, 0) : v.shape[1] - max(dc, 0)]
        both = np.isfinite(a) & np.isfinite(b)
        assert (np.abs(a[both] - b[both]) <= RES * math.sqrt(2) + 1e-9).all()


@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_multi_source_close_to_min(seed, k):
    rng, trav, cells = random_grid(seed)
    src = cells[rng.choice(len(cells), k, replace=False)]
    multi = fmm_field(trav, src, RES).values
    single = np.min([fmm_field(trav, [s], RES).values for s in src], axis=0)
    fin = np.isfinite(single)
    assert (np.isfinite(multi) == fin).all()
    # first-order updates can mix fronts from different sources where they
    # meet, which only ever lowers the value, and by a fraction of a cell
    assert (multi[fin] <= single[fin] + 1e-12).all()
    assert (single[fin] - multi[fin] <= 0.15 * RES).all()


def test_empty_map_relative_error():
    n = 129
    f = fmm_field(np.ones((n, n), bool), [(64, 64)], RES).values
    e = euclid_lb((n, n), [(64, 64)], RES)
    m = e > 0
    assert (np.abs(f[m] - e[m]) / e[m]).max() <= 0.05


@given(st.integers(0, 2**32 - 1))
def test_waypoint_descent_is_monotone(seed):
    rng, trav, cells = random_grid(seed, p=0.15)
    src = cells[rng.integers(len(cells))]
    field = fmm_field(trav, [src], RES)
    reach = np.argwhere(np.isfinite(field.values))
    cell = tuple(reach[rng.integers(len(reach))])
    for _ in range(200):
        if field.at(cell) == 0.0:
            break
        wp, val = select_waypoint(field, cell, 20)
        assert val < field.at(cell)
        cell = wp
    assert field.at(cell) == 0.0


def test_descent_path_ends_at_source():
    field = fmm_field(np.ones((30, 30), bool), [(5, 5)], RES)
    path = descent_path(field, (25, 20))
    vals = field.values[path[:, 0], path[:, 1]]
    assert tuple(path[-1]) == (5, 5)
    assert (np.diff(vals) < 0).all()


def _centre(cell):
    return ((cell[0] + 0.5) * RES, (cell[1] + 0.5) * RES)


def test_local_action_stop_near_target():
    trav = np.ones((40, 40), bool)
    field = fmm_field(trav, [(20, 21)], RES)
    pose = Pose(*_centre((20, 20)), 0.0)
    assert local_action(field, pose, (20, 20), _centre, 0.1, True) == Action.STOP
    # a frontier goal never triggers stop
    assert local_action(field, pose, (20, 20), _centre, 0.1, False) != Action.STOP


def test_local_action_forward_and_turns():
    trav = np.ones((60, 60), bool)
    field = fmm_field(trav, [(50, 20)], RES)  # straight ahead along +x
    at = (20, 20)
    assert local_action(field, Pose(*_centre(at), 0.0), at, _centre, 0.1, False) == Action.MOVE_FORWARD
    # goal at +90 degrees relative to heading -pi/2
    assert local_action(field, Pose(*_centre(at), -math.pi / 2), at, _centre, 0.1, False) == Action.TURN_LEFT
    assert local_action(field, Pose(*_centre(at), math.pi / 2), at, _centre, 0.1, False) == Action.TURN_RIGHT


def test_local_action_unreachable():
    trav = np.ones((20, 20), bool)
    trav[:, 10] = False
    field = fmm_field(trav, [(5, 5)], RES)
    with pytest.raises(NoPathError):
        local_action(field, Pose(*_centre((5, 15))), (5, 15), _centre, 0.1, False)
