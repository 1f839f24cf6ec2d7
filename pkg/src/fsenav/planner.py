"""Geodesic distance fields (fast marching) and the local controller.

The solver is first-order and works on the 8-neighbour stencil: every
trial cell is updated from the triangles formed by one axial and one
diagonal accepted neighbour, taking the exact minimum of the linearly
interpolated arrival time along the triangle edge. Single-edge updates
(``a + h`` and ``b + h*sqrt(2)``) are included, so the field never exceeds
the 8-connected Dijkstra distance, and linear interpolation of a convex
distance keeps it above the straight-line distance to a single source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Action, ArgumentError, NoPathError, Pose, wrap_angle

SQRT2 = math.sqrt(2.0)

_NEIGH8 = np.array(
    [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.int64
)


@njit(cache=True)
def _tri(a, b, h):
    # exact minimum over the edge between an axial neighbour (value a, at
    # distance h) and a diagonal neighbour (value b, at distance h*sqrt2)
    q = (a - b) / h
    if 0.0 < q < 0.7071067811865476:
        return a + h * math.sqrt(1.0 - q * q)
    return min(a + h, b + h * 1.4142135623730951)


@njit(cache=True)
def _update_from(vals, accepted, nr, nc, r, c, h):
    """Best candidate at (nr, nc) among stencils that use the newly accepted (r, c)."""
    rows, cols = vals.shape
    dr = r - nr
    dc = c - nc
    v = vals[r, c]
    if dr == 0 or dc == 0:
        best = v + h
        # flanking diagonals of this axial neighbour
        for s in range(-1, 2, 2):
            br = r + s * dc
            bc = c + s * dr
            if 0 <= br < rows and 0 <= bc < cols and accepted[br, bc]:
                cand = _tri(v, vals[br, bc], h)
                if cand < best:
                    best = cand
    else:
        best = v + h * 1.4142135623730951
        # the two axial neighbours of (nr, nc) flanking this diagonal
        if accepted[nr + dr, nc]:
            cand = _tri(vals[nr + dr, nc], v, h)
            if cand < best:
                best = cand
        if accepted[nr, nc + dc]:
            cand = _tri(vals[nr, nc + dc], v, h)
            if cand < best:
                best = cand
    return best


@njit(cache=True)
def _sift_up(heap_key, heap_idx, pos, i):
    key = heap_key[i]
    idx = heap_idx[i]
    while i > 0:
        parent = (i - 1) >> 1
        if heap_key[parent] <= key:
            break
        heap_key[i] = heap_key[parent]
        heap_idx[i] = heap_idx[parent]
        pos[heap_idx[i]] = i
        i = parent
    heap_key[i] = key
    heap_idx[i] = idx
    pos[idx] = i


@njit(cache=True)
def _sift_down(heap_key, heap_idx, pos, n):
    key = heap_key[0]
    idx = heap_idx[0]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and heap_key[child + 1] < heap_key[child]:
            child += 1
        if heap_key[child] >= key:
            break
        heap_key[i] = heap_key[child]
        heap_idx[i] = heap_idx[child]
        pos[heap_idx[i]] = i
        i = child
    heap_key[i] = key
    heap_idx[i] = idx
    pos[idx] = i


@njit(cache=True)
def _fmm_kernel(trav, src_r, src_c, h, max_value, stop_idx, stop_margin):
    rows, cols = trav.shape
    ncell = rows * cols
    vals = np.full((rows, cols), np.inf)
    accepted = np.zeros((rows, cols), dtype=np.bool_)
    # indexed binary heap with decrease-key; pos = -1 when not queued
    heap_key = np.empty(ncell, dtype=np.float64)
    heap_idx = np.empty(ncell, dtype=np.int64)
    pos = np.full(ncell, -1, dtype=np.int64)
    n = 0
    for i in range(src_r.shape[0]):
        idx = src_r[i] * cols + src_c[i]
        if pos[idx] >= 0:
            continue
        vals[src_r[i], src_c[i]] = 0.0
        heap_key[n] = 0.0
        heap_idx[n] = idx
        pos[idx] = n
        n += 1
    while n > 0:
        v = heap_key[0]
        idx = heap_idx[0]
        pos[idx] = -1
        n -= 1
        if n > 0:
            heap_key[0] = heap_key[n]
            heap_idx[0] = heap_idx[n]
            pos[heap_idx[0]] = 0
            _sift_down(heap_key, heap_idx, pos, n)
        if v > max_value:
            vals[idx // cols, idx % cols] = np.inf
            break
        r = idx // cols
        c = idx - r * cols
        accepted[r, c] = True
        if idx == stop_idx and v + stop_margin < max_value:
            max_value = v + stop_margin
        for k in range(8):
            nr = r + _NEIGH8[k, 0]
            nc = c + _NEIGH8[k, 1]
            if nr < 0 or nr >= rows or nc < 0 or nc >= cols:
                continue
            if accepted[nr, nc] or not trav[nr, nc]:
                continue
            cand = _update_from(vals, accepted, nr, nc, r, c, h)
            if cand < vals[nr, nc]:
                vals[nr, nc] = cand
                nidx = nr * cols + nc
                p = pos[nidx]
                if p < 0:
                    p = n
                    n += 1
                heap_key[p] = cand
                heap_idx[p] = nidx
                pos[nidx] = p
                _sift_up(heap_key, heap_idx, pos, p)
    for r in range(rows):
        for c in range(cols):
            if not accepted[r, c]:
                vals[r, c] = np.inf
    return vals


@dataclass(frozen=True)
class DistanceField:
    """Geodesic distance (metres) from a source cell set; ``inf`` where unreachable."""

    values: np.ndarray
    sources: np.ndarray  # (n, 2) int cells
    traversable: np.ndarray
    resolution: float

    def at(self, cell) -> float:
        return float(self.values[cell[0], cell[1]])

    def reachable(self, cell) -> bool:
        return bool(np.isfinite(self.values[cell[0], cell[1]]))


def _as_cells(sources) -> np.ndarray:
    cells = np.asarray(sources, dtype=np.int64)
    if cells.ndim == 2 and cells.shape[1] == 2:
        return cells
    if cells.ndim == 2 and cells.dtype == np.int64 and cells.size == 0:
        return cells.reshape(0, 2)
    raise ValueError("sources must be an (n, 2) array of cells")


def fmm_field(
    traversable,
    sources,
    resolution: float,
    max_distance: float = math.inf,
    stop_cell=None,
    stop_margin: float = 0.0,
) -> DistanceField:
    """Solve |grad d| = 1 with d = 0 on ``sources``.

    ``sources`` may be an (n, 2) cell array or a boolean mask. Non-traversable
    cells are ``inf``. Marching stops once the front passes ``max_distance``,
    or ``stop_margin`` metres after ``stop_cell`` is reached; cells beyond the
    front are left at ``inf`` (values behind it are exact).
    """
    trav = np.ascontiguousarray(traversable, dtype=np.bool_)
    src = np.asarray(sources)
    if src.dtype == np.bool_ and src.shape == trav.shape:
        src = np.argwhere(src)
    src = _as_cells(src)
    if len(src) == 0:
        raise ArgumentError("fmm_field needs at least one source cell")
    rows, cols = trav.shape
    if (src[:, 0] < 0).any() or (src[:, 0] >= rows).any() or (src[:, 1] < 0).any() or (src[:, 1] >= cols).any():
        raise ArgumentError("source cell outside the grid")
    if not trav[src[:, 0], src[:, 1]].all():
        raise ArgumentError("source cells must be traversable")
    stop_idx = -1 if stop_cell is None else int(stop_cell[0]) * cols + int(stop_cell[1])
    vals = _fmm_kernel(
        trav, src[:, 0].copy(), src[:, 1].copy(), float(resolution), float(max_distance), stop_idx, float(stop_margin)
    )
    vals.setflags(write=False)
    return DistanceField(vals, src, trav, float(resolution))


def shortest_path_length(grid_traversable, start_cell, goal_cells, resolution: float) -> float:
    """FMM length from ``start_cell`` to the nearest of ``goal_cells``; ``inf`` if unreachable."""
    goal = np.asarray(goal_cells)
    if goal.dtype == np.bool_:
        goal = np.argwhere(goal)
    goal = _as_cells(goal)
    trav = np.asarray(grid_traversable, dtype=bool)
    goal = goal[trav[goal[:, 0], goal[:, 1]]] if len(goal) else goal
    r, c = start_cell
    if len(goal) == 0 or not trav[r, c]:
        return math.inf
    field = fmm_field(trav, goal, resolution)
    return field.at((r, c))


@njit(cache=True)
def _visible(vals, r0, c0, r1, c1):
    # every cell on the Bresenham segment must be solved (finite)
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dr - dc
    r, c = r0, c0
    while True:
        if not np.isfinite(vals[r, c]):
            return False
        if r == r1 and c == c1:
            return True
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc


@njit(cache=True)
def _descend(vals, r, c, max_steps, radius2):
    rows, cols = vals.shape
    r0, c0 = r, c
    vr, vc = r, c
    for _ in range(max_steps):
        best = vals[r, c]
        br, bc = r, c
        for k in range(8):
            nr = r + _NEIGH8[k, 0]
            nc = c + _NEIGH8[k, 1]
            if 0 <= nr < rows and 0 <= nc < cols and vals[nr, nc] < best:
                best = vals[nr, nc]
                br, bc = nr, nc
        if br == r and bc == c:
            break
        r, c = br, bc
        if not _visible(vals, r0, c0, r, c):
            break
        vr, vc = r, c
        if (r - r0) ** 2 + (c - c0) ** 2 >= radius2:
            break
    return vr, vc


@njit(cache=True)
def _descent_path(vals, r, c, max_steps):
    rows, cols = vals.shape
    out = np.empty((max_steps + 1, 2), dtype=np.int64)
    out[0, 0] = r
    out[0, 1] = c
    n = 1
    for _ in range(max_steps):
        best = vals[r, c]
        br, bc = r, c
        for k in range(8):
            nr = r + _NEIGH8[k, 0]
            nc = c + _NEIGH8[k, 1]
            if 0 <= nr < rows and 0 <= nc < cols and vals[nr, nc] < best:
                best = vals[nr, nc]
                br, bc = nr, nc
        if br == r and bc == c:
            break
        r, c = br, bc
        out[n, 0] = r
        out[n, 1] = c
        n += 1
    return out[:n]


def descent_path(field: DistanceField, cell, max_steps: int | None = None) -> np.ndarray:
    """Cells visited by 8-neighbour steepest descent from ``cell`` down to a minimum."""
    if max_steps is None:
        max_steps = field.values.size
    return _descent_path(field.values, int(cell[0]), int(cell[1]), int(max_steps))


def select_waypoint(field: DistanceField, cell, lookahead_cells: int):
    """Furthest cell along steepest descent from ``cell`` that is still in line of
    sight through solved cells, at most ``lookahead_cells`` away."""
    r, c = _descend(field.values, int(cell[0]), int(cell[1]), 4 * lookahead_cells, lookahead_cells**2)
    return (r, c), float(field.values[r, c])


def local_action(
    field: DistanceField,
    pose: Pose,
    agent_cell,
    cell_center,
    success_radius: float,
    goal_is_target: bool,
    lookahead: float = 1.0,
    turn_threshold_deg: float = 15.0,
    stop_offset: float = 0.0,
) -> Action:
    """One discrete action that descends ``field`` from ``pose``.

    ``cell_center`` maps a cell to world (x, y). ``stop_offset`` is subtracted
    from the field value before the stop test (the runner passes the agent
    body radius so the test is on the gap between body and target).
    Raises NoPathError when the agent cell is unreachable or already a local
    minimum of a non-target goal.
    """
    here = field.at(agent_cell)
    if not math.isfinite(here):
        raise NoPathError("agent cell unreachable in distance field")
    if goal_is_target and here - stop_offset < success_radius:
        return Action.STOP
    lookahead_cells = max(1, int(round(lookahead / field.resolution)))
    wp, wp_val = select_waypoint(field, agent_cell, lookahead_cells)
    if tuple(wp) == tuple(agent_cell) or not wp_val < here:
        raise NoPathError("no descending waypoint within lookahead")
    wx, wy = cell_center(wp)
    bearing = math.atan2(wy - pose.y, wx - pose.x)
    err = wrap_angle(bearing - pose.theta)
    if abs(err) > math.radians(turn_threshold_deg):
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.MOVE_FORWARD


@dataclass(frozen=True)
class PlannerConfig:
    inflation_cells: int = 4
    lookahead: float = 1.0
    turn_threshold_deg: float = 15.0
    goal_reach_radius: float = 0.5
    window_margin: float = 2.5
    stop_margin: float = 0.0  # stop this much inside the success radius
