"""Procedural planar worlds, ray observations and discrete agent dynamics.

Scene grid codes: 0 free, 1 wall, ``2 + k`` object of category ``k``. The
same codes are used as ray hit labels (0 meaning no return), and they line
up with the semantic map channels. Rows index world x, columns world y, and
cell (0, 0) starts at the world origin.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit
from scipy import ndimage

from .core import Action, ArgumentError, DataError, GenerationError, Pose, ProtocolError, StateError
from .planner import fmm_field

FREE = 0
WALL = 1
OBJECT0 = 2

GOAL_CATEGORIES = ("chair", "couch", "potted plant", "bed", "toilet", "tv")
EXTRA_CATEGORIES = ("dining table", "sink", "refrigerator", "book", "clock", "vase", "oven")
DEFAULT_CATEGORIES = GOAL_CATEGORIES + EXTRA_CATEGORIES

MAGIC = b"FSE1"


@dataclass(frozen=True)
class SensorConfig:
    num_rays: int = 64
    fov_deg: float = 90.0
    max_range: float = 5.0

    def bearings(self) -> np.ndarray:
        fov = math.radians(self.fov_deg)
        return -fov / 2 + (np.arange(self.num_rays) + 0.5) * fov / self.num_rays


@dataclass(frozen=True)
class AgentConfig:
    radius: float = 0.15
    forward_step: float = 0.25
    turn_deg: float = 30.0
    success_radius: float = 0.1
    max_steps: int = 500


@dataclass(frozen=True)
class SceneConfig:
    world_size: float = 24.0
    resolution: float = 0.05
    rooms_min: int = 5
    rooms_max: int = 9
    min_room: float = 3.5
    corridor_width: float = 1.0
    wall_thickness: float = 0.15
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    num_goal_categories: int = 6
    objects_per_category: int = 2
    blob_min: int = 2
    blob_max: int = 6
    max_retries: int = 200


@dataclass(frozen=True)
class Scene:
    grid: np.ndarray  # uint8 codes
    resolution: float
    categories: tuple[str, ...]
    scene_id: str = "scene"
    seed: int = 0

    @property
    def shape(self):
        return self.grid.shape

    def category_index(self, name_or_index) -> int:
        if isinstance(name_or_index, str):
            if name_or_index not in self.categories:
                raise ArgumentError(f"unknown category {name_or_index!r}")
            return self.categories.index(name_or_index)
        return int(name_or_index)

    def target_mask(self, category: int) -> np.ndarray:
        return self.grid == OBJECT0 + category

    def has_category(self, category: int) -> bool:
        return bool(self.target_mask(category).any())

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(x / self.resolution + 1e-9), math.floor(y / self.resolution + 1e-9)

    def cell_center(self, cell) -> tuple[float, float]:
        return (cell[0] + 0.5) * self.resolution, (cell[1] + 0.5) * self.resolution

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.grid.shape[0] and 0 <= cell[1] < self.grid.shape[1]

    def free_at(self, x: float, y: float) -> bool:
        cell = self.world_to_cell(x, y)
        return self.in_bounds(cell) and self.grid[cell] == FREE


def clearance_mask(grid: np.ndarray, radius: float, resolution: float) -> np.ndarray:
    """Free cells whose centre sits at least ``radius + res/2`` from any non-free cell centre."""
    free = grid == FREE
    edt = ndimage.distance_transform_edt(free)
    return free & (edt * resolution >= radius + resolution / 2)


# --- floorplan generation -------------------------------------------------


def _split_wall(rect, axis, pos, t):
    r0, r1, c0, c1 = rect
    if axis == 0:
        return (pos, pos + t, c0, c1)
    return (r0, r1, pos, pos + t)


def _generate_floorplan(cfg: SceneConfig, rng: np.random.Generator):
    res = cfg.resolution
    n = int(round(cfg.world_size / res))
    t = max(1, int(round(cfg.wall_thickness / res)))
    min_room = int(round(cfg.min_room / res))
    door = int(round(cfg.corridor_width / res))
    grid = np.full((n, n), WALL, dtype=np.uint8)
    grid[t:-t, t:-t] = FREE
    doors = np.zeros((n, n), dtype=bool)
    target_rooms = int(rng.integers(cfg.rooms_min, cfg.rooms_max + 1))
    rooms = [(t, n - t, t, n - t)]  # interior rectangles [r0, r1) x [c0, c1)
    while len(rooms) < target_rooms:
        sizes = [max(r1 - r0, c1 - c0) for r0, r1, c0, c1 in rooms]
        placed = False
        for i in np.argsort(sizes)[::-1]:
            r0, r1, c0, c1 = rooms[i]
            h, w = r1 - r0, c1 - c0
            axis = 0 if h > w or (h == w and rng.random() < 0.5) else 1
            lo, hi = (r0, r1) if axis == 0 else (c0, c1)
            if hi - lo < 2 * min_room + t:
                axis = 1 - axis
                lo, hi = (r0, r1) if axis == 0 else (c0, c1)
                if hi - lo < 2 * min_room + t:
                    continue
            for _ in range(20):
                pos = int(rng.integers(lo + min_room, hi - min_room - t + 1))
                wr0, wr1, wc0, wc1 = _split_wall(rooms[i], axis, pos, t)
                # the new wall must not land in a doorway of the enclosing walls
                if axis == 0:
                    ends = doors[wr0 - door // 2 : wr1 + door // 2, [c0 - 1, c1]]
                else:
                    ends = doors[[r0 - 1, r1], wc0 - door // 2 : wc1 + door // 2]
                if not ends.any():
                    break
            else:
                continue
            grid[wr0:wr1, wc0:wc1] = WALL
            span = (c0, c1) if axis == 0 else (r0, r1)
            if span[1] - span[0] <= door + 2:
                raise GenerationError("room too narrow for a doorway")
            d0 = int(rng.integers(span[0] + 1, span[1] - door))
            if axis == 0:
                grid[wr0:wr1, d0 : d0 + door] = FREE
                doors[wr0:wr1, d0 : d0 + door] = True
                a, b = (r0, pos, c0, c1), (pos + t, r1, c0, c1)
            else:
                grid[d0 : d0 + door, wc0:wc1] = FREE
                doors[d0 : d0 + door, wc0:wc1] = True
                a, b = (r0, r1, c0, pos), (r0, r1, pos + t, c1)
            rooms[i : i + 1] = [a, b]
            placed = True
            break
        if not placed:
            break
    return grid, doors, rooms


def _place_blob(grid, room, size, code, rng, keepout):
    r0, r1, c0, c1 = room
    # free cells hugging a wall on the room's inner border
    cand = []
    for r in range(r0, r1):
        for c in (c0, c1 - 1):
            cand.append((r, c))
    for c in range(c0, c1):
        for r in (r0, r1 - 1):
            cand.append((r, c))
    cand = [p for p in cand if grid[p] == FREE and not keepout[p]]
    if not cand:
        return None
    seed = cand[int(rng.integers(len(cand)))]
    blob = [seed]
    frontier = [seed]
    while len(blob) < size and frontier:
        r, c = frontier[int(rng.integers(len(frontier)))]
        nbrs = [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)]
        nbrs = [
            p
            for p in nbrs
            if r0 <= p[0] < r1 and c0 <= p[1] < c1 and grid[p] == FREE and not keepout[p] and p not in blob
        ]
        if not nbrs:
            frontier.remove((r, c))
            continue
        p = nbrs[int(rng.integers(len(nbrs)))]
        blob.append(p)
        frontier.append(p)
    if len(blob) < size:
        return None
    for p in blob:
        grid[p] = code
    return blob


def generate_scene(config: SceneConfig, seed: int, scene_id: str | None = None, agent_radius: float = 0.15) -> Scene:
    """Room-and-door floorplan from recursive binary splits, with object blobs against walls.

    Deterministic per seed. Every blob must be approachable from the main
    connected region (checked by FMM), otherwise the whole layout is redrawn.
    """
    rng = np.random.default_rng(seed)
    res = config.resolution
    for _ in range(config.max_retries):
        grid, doors, rooms = _generate_floorplan(config, rng)
        keepout = ndimage.binary_dilation(doors, iterations=int(round(0.6 / res)))
        placed_ok = True
        for k in range(len(config.categories)):
            count = config.objects_per_category if k < config.num_goal_categories else max(1, config.objects_per_category // 2)
            for _ in range(count):
                for _attempt in range(30):
                    room = rooms[int(rng.integers(len(rooms)))]
                    size = int(rng.integers(config.blob_min, config.blob_max + 1))
                    blob = _place_blob(grid, room, size, OBJECT0 + k, rng, keepout)
                    if blob is not None:
                        # keep other blobs a body width away
                        for p in blob:
                            keepout[
                                max(p[0] - 8, 0) : p[0] + 9,
                                max(p[1] - 8, 0) : p[1] + 9,
                            ] = True
                        break
                else:
                    placed_ok = False
                    break
            if not placed_ok:
                break
        if not placed_ok:
            continue
        scene = Scene(grid, res, tuple(config.categories), scene_id or f"scene_{seed}", seed)
        if _objects_reachable(scene, agent_radius):
            return scene
    raise GenerationError(f"scene generation failed after {config.max_retries} attempts (seed {seed})")


def main_region(scene: Scene, agent_radius: float) -> np.ndarray:
    clear = clearance_mask(scene.grid, agent_radius, scene.resolution)
    labels, n = ndimage.label(clear, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return clear
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == int(np.argmax(counts))


def _objects_reachable(scene: Scene, agent_radius: float) -> bool:
    region = main_region(scene, agent_radius)
    if not region.any():
        return False
    seed_cell = np.argwhere(region)[0]
    field = fmm_field(region, seed_cell[None, :], scene.resolution)
    reach = np.isfinite(field.values)
    objects = scene.grid >= OBJECT0
    labels, n = ndimage.label(objects, structure=np.ones((3, 3), dtype=bool))
    near = int(math.ceil((agent_radius + 2 * scene.resolution) / scene.resolution)) + 1
    for i in range(1, n + 1):
        halo = ndimage.binary_dilation(labels == i, iterations=near)
        if not (halo & reach).any():
            return False
    return True


# --- episodes -------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeSpec:
    scene_id: str
    category: int
    start: Pose
    optimal_length: float

    def to_json(self, scene: Scene | None = None) -> dict:
        cat = scene.categories[self.category] if scene is not None else self.category
        return {
            "scene": self.scene_id,
            "category": cat,
            "start": self.start.as_list(),
            "optimal_length": self.optimal_length,
        }


class TargetGeometry:
    """Ground-truth distances to one category: body gap field and success region."""

    def __init__(self, scene: Scene, category: int, agent: AgentConfig):
        self.scene = scene
        self.category = category
        self.agent = agent
        target = scene.target_mask(category)
        if not target.any():
            raise ArgumentError(f"category {category} absent from scene {scene.scene_id}")
        self.target = target
        trav = (scene.grid == FREE) | target
        self.field = fmm_field(trav, target, scene.resolution)
        # distance from body edge to the target surface
        self.offset = agent.radius + scene.resolution / 2

    @cached_property
    def clearance(self) -> np.ndarray:
        return main_region(self.scene, self.agent.radius)

    @cached_property
    def success_region(self) -> np.ndarray:
        gap = self.field.values - self.offset
        return self.clearance & (gap < self.agent.success_radius)

    @cached_property
    def optimal_field(self):
        region = self.success_region
        if not region.any():
            return None
        return fmm_field(self.clearance, region, self.scene.resolution)

    def gap(self, x: float, y: float) -> float:
        cell = self.scene.world_to_cell(x, y)
        v = self.field.at(cell)
        return max(0.0, v - self.offset) if math.isfinite(v) else math.inf

    def euclidean_gap(self, x: float, y: float) -> float:
        cells = np.argwhere(self.target)
        centers = (cells + 0.5) * self.scene.resolution
        d = np.hypot(centers[:, 0] - x, centers[:, 1] - y).min()
        return max(0.0, float(d) - self.offset)

    def optimal_length(self, cell) -> float:
        f = self.optimal_field
        return math.inf if f is None else f.at(cell)


def sample_episode(
    scene: Scene,
    category,
    seed: int,
    agent: AgentConfig = AgentConfig(),
    min_length: float = 1.0,
    max_tries: int = 1000,
    geometry: TargetGeometry | None = None,
) -> EpisodeSpec:
    """Uniform start on clear space; rejects starts closer than ``min_length`` to success."""
    cat = scene.category_index(category)
    if not scene.has_category(cat):
        raise ArgumentError(f"category {category!r} not present in scene {scene.scene_id}")
    geo = geometry or TargetGeometry(scene, cat, agent)
    rng = np.random.default_rng(seed)
    free = geo.clearance
    # corner-anchored poses need one extra cell of margin
    free = free & ndimage.binary_erosion(free, iterations=1)
    cells = np.argwhere(free)
    if len(cells) == 0:
        raise GenerationError("no clear start cells")
    for _ in range(max_tries):
        r, c = cells[int(rng.integers(len(cells)))]
        length = geo.optimal_length((r, c))
        if not math.isfinite(length) or length < min_length:
            continue
        theta = float(rng.uniform(-math.pi, math.pi))
        start = Pose(float(r * scene.resolution), float(c * scene.resolution), theta)
        return EpisodeSpec(scene.scene_id, cat, start, float(length))
    raise GenerationError(f"no start at least {min_length} m from category {cat}")


def generate_episodes(
    scene: Scene,
    count: int,
    seed: int,
    agent: AgentConfig = AgentConfig(),
    num_goal_categories: int = len(GOAL_CATEGORIES),
    min_length: float = 1.0,
) -> list[EpisodeSpec]:
    """``count`` episodes with goal categories drawn uniformly from those present."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(scene.seed)]))
    present = [k for k in range(min(num_goal_categories, len(scene.categories))) if scene.has_category(k)]
    if not present:
        raise GenerationError(f"scene {scene.scene_id} has no goal category")
    geos = {}
    out = []
    for _ in range(count):
        cat = present[int(rng.integers(len(present)))]
        geo = geos.get(cat) or geos.setdefault(cat, TargetGeometry(scene, cat, agent))
        out.append(sample_episode(scene, cat, int(rng.integers(2**31)), agent, min_length, geometry=geo))
    return out


# --- sensing --------------------------------------------------------------


@njit(cache=True)
def _cast_rays(grid, x, y, angles, max_range, res):
    rows, cols = grid.shape
    n = angles.shape[0]
    ranges = np.full(n, max_range)
    labels = np.zeros(n, dtype=np.int64)
    gx = x / res
    gy = y / res
    for i in range(n):
        dx = math.cos(angles[i])
        dy = math.sin(angles[i])
        r = int(math.floor(gx + 1e-9))
        c = int(math.floor(gy + 1e-9))
        step_r = 1 if dx > 0 else -1
        step_c = 1 if dy > 0 else -1
        if dx != 0.0:
            t_delta_r = abs(1.0 / dx)
            nxt = (r + 1 - gx) if dx > 0 else (gx - r)
            t_max_r = nxt * t_delta_r
        else:
            t_delta_r = np.inf
            t_max_r = np.inf
        if dy != 0.0:
            t_delta_c = abs(1.0 / dy)
            nxt = (c + 1 - gy) if dy > 0 else (gy - c)
            t_max_c = nxt * t_delta_c
        else:
            t_delta_c = np.inf
            t_max_c = np.inf
        limit = max_range / res
        while True:
            if t_max_r < t_max_c:
                t = t_max_r
                r += step_r
                t_max_r += t_delta_r
            else:
                t = t_max_c
                c += step_c
                t_max_c += t_delta_c
            if t >= limit:
                break
            if r < 0 or r >= rows or c < 0 or c >= cols:
                break
            code = grid[r, c]
            if code != 0:
                ranges[i] = max(t * res, 1e-6)
                labels[i] = code
                break
    return ranges, labels


@dataclass(frozen=True)
class Observation:
    ranges: np.ndarray
    labels: np.ndarray  # scene codes of hit cells, 0 = no return
    pose: Pose
    goal_category: int


def observe(scene: Scene, pose: Pose, sensor: SensorConfig = SensorConfig(), goal_category: int = -1) -> Observation:
    if not scene.free_at(pose.x, pose.y):
        raise StateError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in free space")
    angles = pose.theta + sensor.bearings()
    ranges, labels = _cast_rays(scene.grid, pose.x, pose.y, angles, float(sensor.max_range), scene.resolution)
    return Observation(ranges, labels, pose, goal_category)


# --- dynamics -------------------------------------------------------------


def disc_collides(scene: Scene, points: np.ndarray, radius: float) -> bool:
    """True if a disc at any of ``points`` (n, 2) overlaps a non-free cell square."""
    res = scene.resolution
    lo = np.floor((points.min(axis=0) - radius) / res).astype(int)
    hi = np.floor((points.max(axis=0) + radius) / res).astype(int)
    rows, cols = scene.grid.shape
    if lo[0] < 0 or lo[1] < 0 or hi[0] >= rows or hi[1] >= cols:
        return True
    sub = scene.grid[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1]
    occ = np.argwhere(sub != FREE)
    if len(occ) == 0:
        return False
    cmin = (occ + lo) * res
    cmax = cmin + res
    for p in points:
        nearest = np.clip(p, cmin, cmax)
        if (((nearest - p) ** 2).sum(axis=1) < radius * radius).any():
            return True
    return False


@dataclass
class AgentState:
    pose: Pose
    steps: int = 0
    done: bool = False
    success: bool = False
    path_length: float = 0.0
    # heading = start heading + turns * turn angle, so turns undo exactly
    turns: int = 0
    heading0: float | None = None

    def __post_init__(self):
        if self.heading0 is None:
            self.heading0 = self.pose.theta


@dataclass(frozen=True)
class StepOutcome:
    pose: Pose
    collided: bool
    done: bool
    success: bool
    steps: int


def step(scene: Scene, state: AgentState, action: Action, agent: AgentConfig, geometry: TargetGeometry) -> StepOutcome:
    """Apply one action in place on ``state``."""
    if state.done:
        raise ProtocolError("action after episode end")
    action = Action(action)
    pose = state.pose
    collided = False
    success = False
    done = False
    if action == Action.MOVE_FORWARD:
        dx = agent.forward_step * math.cos(pose.theta)
        dy = agent.forward_step * math.sin(pose.theta)
        n = max(2, int(math.ceil(agent.forward_step / (scene.resolution / 2))) + 1)
        s = np.linspace(0.0, 1.0, n)[:, None]
        pts = np.array([pose.x, pose.y]) + s * np.array([dx, dy])
        if disc_collides(scene, pts, agent.radius):
            collided = True
        else:
            pose = Pose(pose.x + dx, pose.y + dy, pose.theta)
            state.path_length += agent.forward_step
    elif action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        state.turns += 1 if action == Action.TURN_LEFT else -1
        pose = Pose(pose.x, pose.y, state.heading0 + state.turns * math.radians(agent.turn_deg))
    else:
        done = True
        success = geometry.gap(pose.x, pose.y) < agent.success_radius
    state.pose = pose
    state.steps += 1
    if state.steps >= agent.max_steps:
        done = True
    state.done = done
    state.success = success
    return StepOutcome(pose, collided, done, success, state.steps)


# --- files ----------------------------------------------------------------


def save_scene(scene: Scene, path) -> None:
    rows, cols = scene.grid.shape
    sid = scene.scene_id.encode()
    parts = [MAGIC, struct.pack("<IIdQ", rows, cols, scene.resolution, scene.seed)]
    parts.append(struct.pack("<H", len(sid)) + sid)
    parts.append(struct.pack("<H", len(scene.categories)))
    for name in scene.categories:
        b = name.encode()
        parts.append(struct.pack("<H", len(b)) + b)
    parts.append(np.ascontiguousarray(scene.grid, dtype=np.uint8).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_scene(path) -> Scene:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    try:
        return _decode_scene(data, path)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise DataError(f"{path}: corrupt scene file ({exc})") from None


def _decode_scene(data: bytes, path) -> Scene:
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not an FSE1 scene file")
    off = 4
    rows, cols, res, seed = struct.unpack_from("<IIdQ", data, off)
    off += struct.calcsize("<IIdQ")

    def read_str():
        nonlocal off
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        s = data[off : off + n].decode()
        off += n
        return s

    sid = read_str()
    (ncat,) = struct.unpack_from("<H", data, off)
    off += 2
    cats = tuple(read_str() for _ in range(ncat))
    grid = np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=off).reshape(rows, cols).copy()
    if off + rows * cols != len(data):
        raise DataError(f"{path}: trailing or missing grid bytes")
    return Scene(grid, res, cats, sid, int(seed))


def save_episodes(episodes, scenes: dict, path) -> None:
    with open(path, "w") as f:
        for ep in episodes:
            f.write(json.dumps(ep.to_json(scenes.get(ep.scene_id)), sort_keys=True) + "\n")


def load_episodes(path, scenes: dict | None = None) -> list[EpisodeSpec]:
    out = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                cat = d["category"]
                if isinstance(cat, str):
                    if scenes is None or d["scene"] not in scenes:
                        raise DataError(f"{path}: scene {d['scene']!r} not loaded, cannot resolve {cat!r}")
                    cat = scenes[d["scene"]].category_index(cat)
                x, y, th = d["start"]
                out.append(EpisodeSpec(d["scene"], int(cat), Pose(x, y, th), float(d["optimal_length"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: bad episode line ({exc})") from None
    return out
