"""Agent-centric semantic occupancy map.

Channel layout: 0 obstacle, 1 explored, ``2 + k`` semantic category ``k``.
Rows index world x and columns index world y, so a cell is
``floor((p - origin) / resolution)`` taken per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import BoundsError, ConfigError, ObservationError, Pose

OBSTACLE = 0
EXPLORED = 1
SEMANTIC0 = 2

# absorbs float error in (p - origin) / resolution, e.g. 0.1/0.05 = 1.9999999
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class MapConfig:
    size_cells: int = 480
    resolution: float = 0.05
    num_semantic: int = 13
    crop_cells: int = 240
    downsample_factor: int = 8

    def __post_init__(self):
        if self.size_cells <= 0:
            raise ConfigError("map size_cells must be positive")
        if not self.resolution > 0:
            raise ConfigError("map resolution must be positive")
        if self.num_semantic < 0:
            raise ConfigError("num_semantic must be >= 0")
        if not 0 < self.crop_cells <= self.size_cells:
            raise ConfigError("crop_cells must be in (0, size_cells]")
        if self.downsample_factor <= 0 or self.crop_cells % self.downsample_factor:
            raise ConfigError("crop_cells must be divisible by downsample_factor")

    @property
    def num_channels(self) -> int:
        return self.num_semantic + 2

    @property
    def policy_side(self) -> int:
        return self.crop_cells // self.downsample_factor


@njit(cache=True)
def _trace_rays(channels, r0, c0, end_r, end_c, hit, label, touched, new_obs):
    """Bresenham from (r0, c0) to each end cell; mark explored / obstacle / semantic."""
    n_ch, rows, cols = channels.shape
    n_new = 0
    for i in range(end_r.shape[0]):
        r1 = end_r[i]
        c1 = end_c[i]
        dr = abs(r1 - r0)
        dc = abs(c1 - c0)
        sr = 1 if r1 > r0 else -1
        sc = 1 if c1 > c0 else -1
        err = dr - dc
        r = r0
        c = c0
        while True:
            at_end = r == r1 and c == c1
            if 0 <= r < rows and 0 <= c < cols:
                if not (at_end and hit[i]):
                    channels[1, r, c] = 1
                    touched[r, c] = True
            if at_end:
                break
            e2 = 2 * err
            if e2 > -dc:
                err -= dc
                r += sr
            if e2 < dr:
                err += dr
                c += sc
        if hit[i] and 0 <= r1 < rows and 0 <= c1 < cols:
            if channels[0, r1, c1] == 0:
                new_obs[n_new, 0] = r1
                new_obs[n_new, 1] = c1
                n_new += 1
            channels[0, r1, c1] = 1
            channels[1, r1, c1] = 1
            touched[r1, c1] = True
            k = label[i]
            if 2 <= k < n_ch:
                channels[k, r1, c1] = 1
    return n_new


class SemanticMap:
    """K x M x M binary map plus the world position of cell (0, 0)."""

    def __init__(self, config: MapConfig, origin: tuple[float, float], channels: np.ndarray | None = None):
        self.config = config
        self.origin = (float(origin[0]), float(origin[1]))
        k, m = config.num_channels, config.size_cells
        if channels is None:
            channels = np.zeros((k, m, m), dtype=np.uint8)
        elif channels.shape != (k, m, m):
            raise ConfigError(f"channel array shape {channels.shape} != {(k, m, m)}")
        self.channels = channels
        # obstacle cells first set by the latest integrate_observation
        self.new_obstacles = np.zeros((0, 2), dtype=np.int64)

    @property
    def resolution(self) -> float:
        return self.config.resolution

    @property
    def size(self) -> int:
        return self.config.size_cells

    @property
    def obstacle(self) -> np.ndarray:
        return self.channels[OBSTACLE]

    @property
    def explored(self) -> np.ndarray:
        return self.channels[EXPLORED]

    def semantic(self, category: int) -> np.ndarray:
        return self.channels[SEMANTIC0 + category]

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.config, self.origin, self.channels.copy())

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.size and 0 <= c < self.size

    def world_to_cell(self, p) -> tuple[int, int]:
        x, y = (p.x, p.y) if isinstance(p, Pose) else p
        r = math.floor((x - self.origin[0]) / self.resolution + _FLOOR_EPS)
        c = math.floor((y - self.origin[1]) / self.resolution + _FLOOR_EPS)
        if not self.in_bounds((r, c)):
            raise BoundsError(f"point ({x:.3f}, {y:.3f}) maps to cell ({r}, {c}) outside the map")
        return r, c

    def cell_to_world(self, cell) -> tuple[float, float]:
        r, c = cell
        return (
            self.origin[0] + (r + 0.5) * self.resolution,
            self.origin[1] + (c + 0.5) * self.resolution,
        )

    def integrate_observation(self, obs, pose: Pose, sensor) -> np.ndarray:
        """Fuse one ray scan taken at ``pose``; returns the mask of cells written.

        Fusion is a binary OR, so values never decrease.
        """
        ranges = np.asarray(obs.ranges, dtype=np.float64)
        labels = np.asarray(obs.labels, dtype=np.int64)
        if ranges.shape != (sensor.num_rays,) or labels.shape != (sensor.num_rays,):
            raise ObservationError(
                f"expected {sensor.num_rays} rays, got ranges {ranges.shape} labels {labels.shape}"
            )
        r0, c0 = self.world_to_cell(pose)
        angles = pose.theta + sensor.bearings()
        hit = labels > 0
        # nudge hit points past the cell face they landed on
        reach = ranges + np.where(hit, 1e-6, -1e-6)
        ex = pose.x + reach * np.cos(angles)
        ey = pose.y + reach * np.sin(angles)
        end_r = np.floor((ex - self.origin[0]) / self.resolution + _FLOOR_EPS).astype(np.int64)
        end_c = np.floor((ey - self.origin[1]) / self.resolution + _FLOOR_EPS).astype(np.int64)
        touched = np.zeros((self.size, self.size), dtype=np.bool_)
        new_obs = np.zeros((len(ranges), 2), dtype=np.int64)
        n_new = _trace_rays(self.channels, r0, c0, end_r, end_c, hit, labels, touched, new_obs)
        self.new_obstacles = new_obs[:n_new]
        return touched

    def crop_egocentric(self, frontier_map: np.ndarray, pose: Pose) -> np.ndarray:
        """(K+4) x S x S policy input centred on the agent, zero-padded, average-pooled.

        S = crop_cells / downsample_factor.
        """
        cfg = self.config
        crop = cfg.crop_cells
        k = cfg.num_channels
        r, c = self.world_to_cell(pose)
        half = crop // 2
        out = np.zeros((k + len(frontier_map), crop, crop), dtype=np.float32)
        r0, c0 = r - half, c - half
        sr0, sc0 = max(r0, 0), max(c0, 0)
        sr1, sc1 = min(r0 + crop, self.size), min(c0 + crop, self.size)
        if sr1 > sr0 and sc1 > sc0:
            dst = (slice(sr0 - r0, sr1 - r0), slice(sc0 - c0, sc1 - c0))
            out[(slice(0, k),) + dst] = self.channels[:, sr0:sr1, sc0:sc1]
            out[(slice(k, None),) + dst] = frontier_map[:, sr0:sr1, sc0:sc1]
        f = cfg.downsample_factor
        s = crop // f
        return out.reshape(out.shape[0], s, f, s, f).mean(axis=(2, 4))


def new_map(config: MapConfig, start: Pose) -> SemanticMap:
    """All-zero map whose centre cell (M/2, M/2) contains ``start``."""
    half = (config.size_cells // 2) * config.resolution
    return SemanticMap(config, (start.x - half, start.y - half))
