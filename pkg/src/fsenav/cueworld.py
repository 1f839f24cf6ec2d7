"""Two-room cue scenes: a toy family where goal selection has to use semantics.

A square hub opens through two doorways onto a left and a right side room.
The goal object sits at the far end of one side room, out of sensor range
from the hub. A single cue object in the hub tells which room: cue category
``CUE_LEFT`` means the left room (-y), ``CUE_RIGHT`` the right room (+y).
From the start the hub is fully mapped and the two doorways are the only
frontiers, so the first frontier choice is a clean left/right decision.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .core import Pose
from .gridmap import MapConfig
from .simworld import (
    DEFAULT_CATEGORIES,
    FREE,
    OBJECT0,
    WALL,
    AgentConfig,
    EpisodeSpec,
    Scene,
    SensorConfig,
    TargetGeometry,
)

GOAL = 3  # bed
DECOY = 4  # toilet, placed in the other room
CUE_LEFT = 6  # dining table
CUE_RIGHT = 7  # sink


@dataclass(frozen=True)
class CueTask:
    scene: Scene
    spec: EpisodeSpec
    goal_side: int  # -1 left (-y), +1 right (+y)
    geometry: TargetGeometry


def cue_config() -> ExperimentConfig:
    base = ExperimentConfig()
    return base.replace(
        map=MapConfig(size_cells=240, resolution=0.05, crop_cells=240, downsample_factor=8),
        sensor=SensorConfig(num_rays=720, fov_deg=360.0, max_range=3.0),
        agent=AgentConfig(success_radius=1.0, max_steps=40),
        run=dataclasses.replace(base.run, global_interval=25),
        train=dataclasses.replace(base.train, episodes_per_update=16),
    )


def cue_scene(seed: int, resolution: float = 0.05) -> tuple[Scene, int, Pose]:
    """Build one scene; returns (scene, goal side, start pose)."""
    rng = np.random.default_rng(np.random.SeedSequence([7919, int(seed)]))
    res = resolution
    cells = lambda m: int(round(m / res))  # noqa: E731
    t = cells(0.15)
    hub = cells(3.0)
    side = cells(3.0)
    depth = cells(3.5)
    door = cells(1.0)
    rows = hub + 2 * t
    cols = hub + 2 * depth + 4 * t
    grid = np.full((rows, cols), WALL, dtype=np.uint8)
    h0 = 2 * t + depth  # first hub column
    grid[t : t + hub, h0 : h0 + hub] = FREE
    left = (t + (hub - side) // 2, t + (hub - side) // 2 + side, t, t + depth)
    right = (left[0], left[1], h0 + hub + t, h0 + hub + t + depth)
    for r0, r1, c0, c1 in (left, right):
        grid[r0:r1, c0:c1] = FREE
    d0 = t + (hub - door) // 2
    grid[d0 : d0 + door, h0 - t : h0] = FREE
    grid[d0 : d0 + door, h0 + hub : h0 + hub + t] = FREE

    goal_side = -1 if rng.random() < 0.5 else 1
    blob = cells(0.3)

    def far_end(room, sign):
        r0, r1, c0, c1 = room
        rr = int(rng.integers(r0 + blob, r1 - 2 * blob))
        cc = c0 if sign < 0 else c1 - blob
        return rr, cc

    for room, sign in ((left, -1), (right, 1)):
        rr, cc = far_end(room, sign)
        grid[rr : rr + blob, cc : cc + blob] = OBJECT0 + (GOAL if sign == goal_side else DECOY)
    # cue against the hub wall opposite the start side
    cue = CUE_LEFT if goal_side < 0 else CUE_RIGHT
    cc = h0 + (hub - blob) // 2 + int(rng.integers(-blob, blob + 1))
    grid[t : t + blob, cc : cc + blob] = OBJECT0 + cue

    # start near the hub centre, cell-corner anchored
    jr, jc = (int(v) for v in rng.integers(-cells(0.3), cells(0.3) + 1, size=2))
    sr = t + hub // 2 + jr
    sc = h0 + hub // 2 + jc
    start = Pose(float(sr * res), float(sc * res), float(rng.uniform(-math.pi, math.pi)))
    scene = Scene(grid, res, DEFAULT_CATEGORIES, f"cue_{seed}", int(seed))
    return scene, goal_side, start


def cue_task(seed: int, config: ExperimentConfig | None = None) -> CueTask:
    cfg = config or cue_config()
    scene, side, start = cue_scene(seed, cfg.scene.resolution)
    geo = TargetGeometry(scene, GOAL, cfg.agent)
    sc = scene.world_to_cell(start.x, start.y)
    spec = EpisodeSpec(scene.scene_id, GOAL, start, float(geo.optimal_length(sc)))
    return CueTask(scene, spec, side, geo)
