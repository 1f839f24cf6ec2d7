"""Shaped reward: geodesic progress, smooth coverage, and a time penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIME_PENALTY = -0.001


@dataclass(frozen=True)
class RewardConfig:
    geodesic_coeff: float = 1.0
    coverage_coeff: float = 0.05
    coverage_cell: float = 1.0  # metres per coarse cell side
    time_penalty: float = TIME_PENALTY


@dataclass(frozen=True)
class RewardBreakdown:
    r_d: float
    r_e: float
    time: float
    total: float


def geodesic_reward(d_prev: float, d_curr: float, coeff: float = 1.0) -> float:
    return coeff * (d_prev - d_curr)


def step_reward(r_d: float, r_e: float, time_penalty: float = TIME_PENALTY) -> RewardBreakdown:
    return RewardBreakdown(r_d, r_e, time_penalty, r_d + r_e + time_penalty)


class CoverageState:
    """Coarse grid over the map tracking explored area and scan counts per cell.

    The potential is sum_i A_i / sqrt(n_i) over cells scanned at least once.
    """

    def __init__(self, map_cells: int, resolution: float, cell_size: float = 1.0, coeff: float = 0.05):
        self.block = max(1, int(round(cell_size / resolution)))
        self.map_cells = map_cells
        self.resolution = resolution
        self.coeff = coeff
        g = -(-map_cells // self.block)
        self.area = np.zeros((g, g))
        self.count = np.zeros((g, g), dtype=np.int64)
        self.potential = 0.0

    def compute_potential(self) -> float:
        seen = self.count > 0
        return float((self.area[seen] / np.sqrt(self.count[seen])).sum())

    def update(self, touched: np.ndarray, explored: np.ndarray) -> float:
        """Advance one step; returns r_e = coeff * (potential_t - potential_{t-1}).

        ``touched`` is the mask of map cells written this step; every coarse
        cell containing one counts as scanned once.
        """
        rr, cc = np.nonzero(touched)
        if rr.size == 0:
            return 0.0
        b = self.block
        g = self.area.shape[0]
        coarse = np.unique((rr // b) * g + cc // b)
        cell_area = self.resolution**2
        for gi, gj in zip(*np.divmod(coarse, g)):
            self.count[gi, gj] += 1
            block = explored[gi * b : (gi + 1) * b, gj * b : (gj + 1) * b]
            self.area[gi, gj] = np.count_nonzero(block) * cell_area
        prev = self.potential
        self.potential = self.compute_potential()
        return self.coeff * (self.potential - prev)
