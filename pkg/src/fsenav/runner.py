"""Episode loop: observe, map, pick goals, plan, step; plus batch execution.

Planning runs on a window of the map (explored bounding box plus a margin),
so field cost scales with what the agent has seen rather than the full map.
The goal field is cached and only recomputed when the goal changes, the
agent leaves the solved region, or new obstacles land on the solved region.
"""

from __future__ import annotations

import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .agents import Decision, DecisionView, GoalPolicy, make_policy
from .config import ExperimentConfig
from .core import Action, FseError, NoPathError, Pose
from .frontier import cluster_frontiers, disk, extract_frontier_cells, score_cost_utility, select_top_k
from .gridmap import SemanticMap, new_map
from .planner import DistanceField, descent_path, fmm_field, local_action
from .policy import GoalCommand, RolloutBuffer, global_step_schedule, nearest_unexplored_cell
from .reward import CoverageState, geodesic_reward
from .simworld import AgentState, EpisodeSpec, Scene, TargetGeometry, observe, step


@dataclass
class EpisodeResult:
    episode_id: int
    scene_id: str
    category: str
    policy: str
    seed: int
    success: bool
    path_length: float
    optimal_length: float
    dtg: float  # geodesic body gap to the target at the end
    dtg_euclidean: float
    steps: int
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("path_length", "optimal_length", "dtg", "dtg_euclidean"):
            d[k] = None if not math.isfinite(d[k]) else round(float(d[k]), 6)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        d = dict(d)
        for k in ("path_length", "optimal_length", "dtg", "dtg_euclidean"):
            if d.get(k) is None:
                d[k] = math.inf
        d.setdefault("dtg_euclidean", d["dtg"])
        d.setdefault("error", None)
        return cls(**d)


@dataclass
class EpisodeOutput:
    result: EpisodeResult
    buffer: RolloutBuffer | None = None
    log: list | None = None
    decisions: int = 0


@njit(cache=True)
def _stamp(mask, cells, offsets):
    rows, cols = mask.shape
    for i in range(cells.shape[0]):
        for j in range(offsets.shape[0]):
            r = cells[i, 0] + offsets[j, 0]
            c = cells[i, 1] + offsets[j, 1]
            if 0 <= r < rows and 0 <= c < cols:
                mask[r, c] = True


class PlanningMap:
    """Semantic map plus incrementally maintained inflated obstacles and explored bbox."""

    def __init__(self, smap: SemanticMap, inflation: int):
        self.map = smap
        m = smap.size
        self.inflated = np.zeros((m, m), dtype=bool)
        self.blocked = np.zeros((m, m), dtype=bool)  # raw obstacles plus bump cells
        self.offsets = np.argwhere(disk(inflation)).astype(np.int64) - inflation
        self.lo = np.array([m, m])
        self.hi = np.array([-1, -1])

    def add_obstacles(self, cells: np.ndarray) -> None:
        if len(cells):
            cells = np.asarray(cells, dtype=np.int64)
            self.blocked[cells[:, 0], cells[:, 1]] = True
            _stamp(self.inflated, cells, self.offsets)

    def touch(self, touched: np.ndarray) -> None:
        rows = np.flatnonzero(touched.any(axis=1))
        if len(rows):
            cols = np.flatnonzero(touched.any(axis=0))
            self.lo = np.minimum(self.lo, [rows[0], cols[0]])
            self.hi = np.maximum(self.hi, [rows[-1], cols[-1]])

    def window(self, extra_cells, margin: int):
        lo, hi = self.lo.copy(), self.hi.copy()
        for cells in extra_cells:
            if len(cells):
                lo = np.minimum(lo, cells.min(axis=0))
                hi = np.maximum(hi, cells.max(axis=0))
        m = self.map.size
        r0, c0 = np.maximum(lo - margin, 0)
        r1, c1 = np.minimum(hi + margin + 1, m)
        return int(r0), int(c0), int(r1), int(c1)

    def traversable(self, win, agent_cell) -> np.ndarray:
        r0, c0, r1, c1 = win
        trav = ~self.inflated[r0:r1, c0:c1]
        ar, ac = agent_cell[0] - r0, agent_cell[1] - c0
        # the agent's own neighbourhood is always passable unless truly blocked
        sl = (slice(max(ar - 1, 0), ar + 2), slice(max(ac - 1, 0), ac + 2))
        trav[sl] |= ~self.blocked[r0:r1, c0:c1][sl]
        trav[ar, ac] = True
        return trav


def _embed(values: np.ndarray, win, size: int) -> np.ndarray:
    r0, c0, r1, c1 = win
    full = np.full((size, size), np.inf)
    full[r0:r1, c0:c1] = values
    full.setflags(write=False)
    return full


class _GoalTracker:
    """Cached goal field and the bookkeeping around when to refresh it."""

    def __init__(self):
        self.goal: GoalCommand | None = None
        self.field: DistanceField | None = None
        self.win = None
        self.stale = True

    def set(self, goal):
        self.goal = goal
        self.field = None
        self.stale = True

    def invalidate_if_hit(self, new_cells: np.ndarray, agent_cell, reach: int):
        """Mark stale when new obstacles come within ``reach`` cells of the remaining path."""
        if self.field is None or self.stale or len(new_cells) == 0:
            return
        r0, c0 = self.win[0], self.win[1]
        local = (agent_cell[0] - r0, agent_cell[1] - c0)
        if not _in_win(agent_cell, self.win) or not self.field.reachable(local):
            self.stale = True
            return
        path = descent_path(self.field, local) + np.array([r0, c0])
        d = np.abs(new_cells[:, None, :] - path[None, :, :]).max(axis=2)
        if (d <= reach).any():
            self.stale = True


def _episode_rng(seed: int, episode_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(episode_id)]))


def run_episode(
    scene: Scene,
    spec: EpisodeSpec,
    policy: GoalPolicy,
    config: ExperimentConfig,
    seed: int = 0,
    episode_id: int = 0,
    train: bool = False,
    log_steps: bool = False,
    geometry: TargetGeometry | None = None,
) -> EpisodeOutput:
    """Run one episode. Errors are caught and reported in the result."""
    cfg = config
    rng = _episode_rng(seed, episode_id)
    geo = None
    state = AgentState(spec.start)
    log = [] if log_steps else None
    buf = RolloutBuffer() if train else None
    decisions = 0
    error = None
    try:
        geo = geometry or TargetGeometry(scene, spec.category, cfg.agent)
        decisions = _loop(scene, spec, policy, cfg, rng, geo, state, log, buf)
    except FseError as exc:
        error = f"{exc.kind}: {exc}"
    except Exception as exc:  # an episode never takes the batch down
        error = f"internal: {type(exc).__name__}: {exc} @ {traceback.format_exc(limit=-1).strip().splitlines()[0]}"
    pose = state.pose
    if geo is not None:
        dtg, dtg_e = geo.gap(pose.x, pose.y), geo.euclidean_gap(pose.x, pose.y)
    else:
        dtg = dtg_e = math.inf
    result = EpisodeResult(
        episode_id=int(episode_id),
        scene_id=scene.scene_id,
        category=scene.categories[spec.category] if 0 <= spec.category < len(scene.categories) else str(spec.category),
        policy=policy.name,
        seed=int(seed),
        success=bool(state.success and error is None),
        path_length=float(state.path_length),
        optimal_length=float(spec.optimal_length),
        dtg=float(dtg),
        dtg_euclidean=float(dtg_e),
        steps=int(state.steps),
        error=error,
    )
    if buf is not None and len(buf) and not buf.dones[-1]:
        buf.dones[-1] = True
    return EpisodeOutput(result, buf, log, decisions)


def _loop(scene, spec, policy, cfg: ExperimentConfig, rng, geo, state, log, buf) -> int:
    agent, sensor, pcfg, fcfg = cfg.agent, cfg.sensor, cfg.planner, cfg.frontier
    policy.reset(rng)
    smap = new_map(cfg.map, spec.start)
    res = smap.resolution
    size = smap.size
    pm = PlanningMap(smap, pcfg.inflation_cells)
    margin = int(math.ceil(max(pcfg.window_margin, fcfg.utility_radius + res) / res)) + 1
    tracker = _GoalTracker()
    coverage = CoverageState(size, res, cfg.reward.coverage_cell, cfg.reward.coverage_coeff) if buf is not None else None
    # half a cell past the body edge, plus one cell of slack for map/scene grid mismatch
    stop_offset = agent.radius + 0.5 * res - pcfg.stop_margin
    cat = spec.category
    last_decision = -10**9
    force_decision = True
    target_muted_until = -1  # visible target unreachable: explore for a while
    pending = None  # (Decision, accumulated reward) awaiting the next sampled decision
    decisions = 0
    d_prev = geo.field.at(scene.world_to_cell(state.pose.x, state.pose.y)) if buf is not None else 0.0

    def close_pending(done):
        nonlocal pending
        if pending is not None:
            dec, rew = pending
            buf.add(dec.obs, cat, dec.mask, dec.action, dec.logp, dec.value, rew, done)
            pending = None

    while not state.done:
        pose = state.pose
        obs = observe(scene, pose, sensor, cat)
        touched = smap.integrate_observation(obs, pose, sensor)
        pm.touch(touched)
        new_obs = smap.new_obstacles
        pm.add_obstacles(new_obs)
        agent_cell = smap.world_to_cell(pose)
        tracker.invalidate_if_hit(new_obs, agent_cell, pcfg.inflation_cells + 1)

        if policy.low_level:
            action = policy.action(rng)
            goal_cells = None
        else:
            # visible-target shortcut, checked every step
            seen = smap.semantic(cat) if state.steps >= target_muted_until else None
            if seen is None:
                pass
            elif tracker.goal is None or tracker.goal.kind != "target":
                if seen.any():
                    tracker.set(GoalCommand("target", np.argwhere(seen)))
            elif seen.any() and len(tracker.goal.cells) != int(np.count_nonzero(seen)):
                tracker.set(GoalCommand("target", np.argwhere(seen)))
            goal_reached = False
            if tracker.goal is not None and tracker.goal.kind != "target" and tracker.field is not None:
                v = tracker.field.values[agent_cell[0] - tracker.win[0], agent_cell[1] - tracker.win[1]] \
                    if _in_win(agent_cell, tracker.win) else math.inf
                goal_reached = v <= pcfg.goal_reach_radius
            due = global_step_schedule(state.steps - last_decision, goal_reached, force_decision, cfg.run.global_interval)
            if (tracker.goal is None or tracker.goal.kind != "target") and due:
                dec = _decide(policy, smap, pm, cat, agent_cell, pose, margin, fcfg, rng, tracker)
                last_decision = state.steps
                force_decision = False
                if dec.logp is not None:
                    decisions += 1
                    if buf is not None:
                        close_pending(False)
                        pending = (dec, 0.0)
            action = _plan_action(smap, pm, tracker, agent_cell, pose, margin, pcfg, agent, stop_offset, size)
            if action is None:
                if tracker.goal is not None and tracker.goal.kind == "target":
                    target_muted_until = state.steps + cfg.run.global_interval
                    tracker.set(None)
                force_decision = True
                action = Action.TURN_LEFT
            goal_cells = None if tracker.goal is None else tracker.goal.cells

        out = step(scene, state, action, agent, geo)
        if out.collided and not policy.low_level:
            _mark_bump(pm, smap, pose, agent, tracker)
        if buf is not None:
            r_e = coverage.update(touched, smap.explored)
            d_curr = geo.field.at(scene.world_to_cell(state.pose.x, state.pose.y))
            r = geodesic_reward(d_prev, d_curr, cfg.reward.geodesic_coeff) + r_e + cfg.reward.time_penalty
            d_prev = d_curr
            if pending is not None:
                pending = (pending[0], pending[1] + r)
        if log is not None:
            log.append(
                {
                    "t": state.steps,
                    "pose": [round(v, 6) for v in state.pose.as_list()],
                    "action": int(action),
                    "collided": bool(out.collided),
                    "goal": None if goal_cells is None else [round(v, 4) for v in smap.cell_to_world(np.asarray(goal_cells).mean(axis=0))],
                    "goal_kind": None if tracker.goal is None else tracker.goal.kind,
                }
            )
    if buf is not None:
        close_pending(True)
    return decisions


def _in_win(cell, win) -> bool:
    return win[0] <= cell[0] < win[2] and win[1] <= cell[1] < win[3]


def _decide(policy, smap, pm, cat, agent_cell, pose, margin, fcfg, rng, tracker) -> Decision:
    """Frontier pipeline on the window, then one policy decision."""
    win = pm.window([np.array([agent_cell])], margin)
    r0, c0, r1, c1 = win
    trav = pm.traversable(win, agent_cell)
    af = fmm_field(trav, [(agent_cell[0] - r0, agent_cell[1] - c0)], smap.resolution)
    size = smap.size
    full_field = DistanceField(_embed(af.values, win, size), np.array([agent_cell]), None, smap.resolution)
    explored = smap.explored
    cells = extract_frontier_cells(explored[r0:r1, c0:c1], smap.obstacle[r0:r1, c0:c1], fcfg.dilate_radius)
    clusters = []
    for cl in cluster_frontiers(cells, fcfg.min_cluster_size):
        shifted = cl.cells + np.array([r0, c0])
        cl = type(cl)(shifted, (cl.centroid[0] + r0, cl.centroid[1] + c0))
        clusters.append(score_cost_utility(cl, explored, full_field, fcfg.lambda_cu, fcfg.utility_radius))
    top = select_top_k(clusters, fcfg.top_k, fcfg.lambda_cu)
    free = np.zeros((size, size), dtype=bool)
    free[r0:r1, c0:c1] = trav

    def policy_input():
        return smap.crop_egocentric(top.frontier_map(size, fcfg.top_k), pose)

    view = DecisionView(smap, cat, top, clusters, full_field, agent_cell, free, policy_input)
    dec = policy.choose(view, rng)
    goal = dec.goal
    if goal is None:
        goal = nearest_unexplored_cell(explored, full_field)
    if goal is None:
        goal = tracker.goal if tracker.goal is not None else GoalCommand("hold", np.array([agent_cell]))
    if goal is not tracker.goal:
        tracker.set(goal)
    dec.goal = goal
    return dec


def _goal_field(smap, pm, tracker, agent_cell, margin, stop_margin):
    goal = tracker.goal
    win = pm.window([np.array([agent_cell]), goal.cells], margin)
    r0, c0, r1, c1 = win
    trav = pm.traversable(win, agent_cell)
    cells = goal.cells - np.array([r0, c0])
    if goal.kind == "target":
        # let the front leave the object through its inflation ring
        ring = np.zeros_like(trav)
        _stamp(ring, cells.astype(np.int64), pm.offsets)
        trav |= ring & ~pm.blocked[r0:r1, c0:c1]
        trav[cells[:, 0], cells[:, 1]] = True
    else:
        cells = cells[trav[cells[:, 0], cells[:, 1]]]
        if len(cells) == 0:
            raise NoPathError("goal cell not traversable")
    f = fmm_field(trav, cells, smap.resolution, stop_cell=(agent_cell[0] - r0, agent_cell[1] - c0), stop_margin=stop_margin)
    tracker.field, tracker.win, tracker.stale = f, win, False


def _plan_action(smap, pm, tracker, agent_cell, pose, margin, pcfg, agent, stop_offset, size):
    """Local action toward the tracked goal; None when the goal is unreachable."""
    if tracker.goal is None:
        return None
    if tracker.goal.kind == "hold":
        return Action.TURN_LEFT
    stop_margin = pcfg.lookahead + 2 * smap.resolution
    for attempt in range(2):
        try:
            if tracker.stale or tracker.field is None or not _in_win(agent_cell, tracker.win):
                _goal_field(smap, pm, tracker, agent_cell, margin, stop_margin)
            r0, c0 = tracker.win[0], tracker.win[1]
            local = (agent_cell[0] - r0, agent_cell[1] - c0)
            if not tracker.field.reachable(local):
                raise NoPathError("agent outside solved region")

            def center(cell):
                return smap.cell_to_world((cell[0] + r0, cell[1] + c0))

            return local_action(
                tracker.field,
                pose,
                local,
                center,
                agent.success_radius,
                tracker.goal.kind == "target",
                pcfg.lookahead,
                pcfg.turn_threshold_deg,
                stop_offset,
            )
        except NoPathError:
            if attempt == 0 and not tracker.stale:
                tracker.stale = True
                continue
            tracker.field = None
            tracker.stale = True
            return None
    return None


def _mark_bump(pm: PlanningMap, smap: SemanticMap, pose: Pose, agent, tracker) -> None:
    """Record the blocked cells just ahead of the agent after a failed forward move."""
    d = agent.radius + smap.resolution
    cells = []
    for off in (-0.5, 0.0, 0.5):
        a = pose.theta + off
        x, y = pose.x + d * math.cos(a), pose.y + d * math.sin(a)
        r = math.floor((x - smap.origin[0]) / smap.resolution)
        c = math.floor((y - smap.origin[1]) / smap.resolution)
        if smap.in_bounds((r, c)):
            cells.append((r, c))
    if cells:
        pm.add_obstacles(np.array(cells, dtype=np.int64))
    tracker.stale = True


# --- batches --------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    episode_id: int
    scene: Scene
    spec: EpisodeSpec


_POLICY_CACHE: dict = {}


def _run_task(args):
    task, policy_spec, config, seed, log_steps = args
    key = policy_spec
    pol = _POLICY_CACHE.get(key)
    if pol is None:
        pol = make_policy(policy_spec)
        _POLICY_CACHE.clear()
        _POLICY_CACHE[key] = pol
    out = run_episode(task.scene, task.spec, pol, config, seed, task.episode_id, log_steps=log_steps)
    return out.result, out.log


def run_batch(
    tasks: list[Task],
    policy_spec: str,
    config: ExperimentConfig,
    seed: int = 0,
    workers: int = 1,
    log_steps: bool = False,
):
    """Run every task; results come back in task order regardless of ``workers``."""
    args = [(t, policy_spec, config, seed, log_steps) for t in tasks]
    if workers <= 1:
        outs = [_run_task(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_task, args, chunksize=1))
    results = [o[0] for o in outs]
    logs = [o[1] for o in outs]
    return results, logs


def initial_decision(scene: Scene, spec: EpisodeSpec, policy: GoalPolicy, config: ExperimentConfig, seed: int = 0, episode_id: int = 0):
    """The first global decision of an episode, taken after one observation at the start.

    Returns (decision, frontier set, map, agent cell).
    """
    rng = _episode_rng(seed, episode_id)
    cfg = config
    smap = new_map(cfg.map, spec.start)
    pm = PlanningMap(smap, cfg.planner.inflation_cells)
    obs = observe(scene, spec.start, cfg.sensor, spec.category)
    pm.touch(smap.integrate_observation(obs, spec.start, cfg.sensor))
    pm.add_obstacles(smap.new_obstacles)
    cell = smap.world_to_cell(spec.start)
    res = smap.resolution
    margin = int(math.ceil(max(cfg.planner.window_margin, cfg.frontier.utility_radius + res) / res)) + 1
    tracker = _GoalTracker()
    captured = {}
    orig = policy.choose

    def spy(view, rng_):
        captured["frontiers"] = view.frontiers
        return orig(view, rng_)

    policy.choose = spy
    try:
        dec = _decide(policy, smap, pm, spec.category, cell, spec.start, margin, cfg.frontier, rng, tracker)
    finally:
        del policy.choose
    return dec, captured.get("frontiers"), smap, cell
