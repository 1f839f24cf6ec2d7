"""Frontier extraction, clustering and cost-utility scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .planner import DistanceField

CROSS = ndimage.generate_binary_structure(2, 1)
SQUARE = ndimage.generate_binary_structure(2, 2)


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def dilate_obstacles(obstacle: np.ndarray, radius: int) -> np.ndarray:
    obs = obstacle.astype(bool)
    if radius <= 0:
        return obs
    return ndimage.binary_dilation(obs, structure=disk(radius))


@dataclass(frozen=True)
class FrontierCluster:
    cells: np.ndarray  # (n, 2) int
    centroid: tuple[int, int]
    utility: float = 0.0
    cost: float = 0.0
    score: float = 0.0


@dataclass(frozen=True)
class FrontierSet:
    clusters: tuple[FrontierCluster, ...]
    lambda_cu: float = 0.5

    def __len__(self):
        return len(self.clusters)

    def mask(self, k: int = 4) -> np.ndarray:
        m = np.zeros(k, dtype=bool)
        m[: len(self.clusters)] = True
        return m

    def frontier_map(self, size: int, k: int = 4) -> np.ndarray:
        """k x M x M binary grid; channel i holds cluster i, the rest stay empty."""
        out = np.zeros((k, size, size), dtype=np.uint8)
        for i, cl in enumerate(self.clusters[:k]):
            out[i, cl.cells[:, 0], cl.cells[:, 1]] = 1
        return out


def frontier_predicate(explored: np.ndarray, obstacle: np.ndarray, dilate_radius: int) -> np.ndarray:
    """Per-cell reference definition, written as plain loops.

    A cell is a frontier when it is explored, clear of the dilated obstacle
    map, and has an in-grid 4-neighbour that is unexplored.
    """
    exp = explored.astype(bool)
    blocked = dilate_obstacles(obstacle, dilate_radius)
    rows, cols = exp.shape
    out = np.zeros_like(exp)
    for r in range(rows):
        for c in range(cols):
            if not exp[r, c] or blocked[r, c]:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < rows and 0 <= nc < cols and not exp[nr, nc]:
                    out[r, c] = True
                    break
    return out


def extract_frontier_cells(explored: np.ndarray, obstacle: np.ndarray, dilate_radius: int = 3) -> np.ndarray:
    """Explored edge minus the dilated obstacle map.

    The edge is the explored region minus its 4-connected erosion; cells
    beyond the grid count as explored so the border is not an edge.
    """
    exp = explored.astype(bool)
    edge = exp & ~ndimage.binary_erosion(exp, structure=CROSS, border_value=1)
    return edge & ~dilate_obstacles(obstacle, dilate_radius)


def cluster_frontiers(cells: np.ndarray, min_cluster_size: int = 5) -> list[FrontierCluster]:
    labels, n = ndimage.label(cells, structure=SQUARE)
    if n == 0:
        return []
    out = []
    idx = np.argwhere(labels > 0)
    lab = labels[idx[:, 0], idx[:, 1]]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    splits = np.flatnonzero(np.diff(lab)) + 1
    for comp in np.split(idx, splits):
        if len(comp) < min_cluster_size:
            continue
        mean = comp.mean(axis=0)
        d2 = ((comp - mean) ** 2).sum(axis=1)
        # argmin picks the first minimum; comp is in row-major order
        k = int(np.argmin(d2))
        out.append(FrontierCluster(cells=comp, centroid=(int(comp[k, 0]), int(comp[k, 1]))))
    return out


def utility(explored: np.ndarray, centroid, radius_cells: int) -> float:
    """Fraction of a full disc around ``centroid`` that is still unexplored."""
    r, c = centroid
    R = radius_cells
    rows, cols = explored.shape
    d = disk(R)
    r0, r1 = max(r - R, 0), min(r + R + 1, rows)
    c0, c1 = max(c - R, 0), min(c + R + 1, cols)
    win = explored[r0:r1, c0:c1] == 0
    dwin = d[r0 - (r - R) : r1 - (r - R), c0 - (c - R) : c1 - (c - R)]
    return float((win & dwin).sum()) / float(d.sum())


def score_cost_utility(
    cluster: FrontierCluster,
    explored: np.ndarray,
    field: DistanceField,
    lambda_cu: float = 0.5,
    utility_radius: float = 2.0,
) -> FrontierCluster:
    """U - lambda * C with U the unknown fraction near the centroid and C the
    agent-sourced geodesic distance over the map diagonal (1 if unreachable)."""
    res = field.resolution
    u = utility(explored, cluster.centroid, int(round(utility_radius / res)))
    d = field.at(cluster.centroid)
    rows, cols = explored.shape
    diag = math.hypot(rows, cols) * res
    cost = 1.0 if not math.isfinite(d) else min(d / diag, 1.0)
    return replace(cluster, utility=u, cost=cost, score=u - lambda_cu * cost)


def select_top_k(clusters, k: int = 4, lambda_cu: float = 0.5) -> FrontierSet:
    ranked = sorted(clusters, key=lambda cl: (-cl.score, cl.centroid[0], cl.centroid[1]))
    return FrontierSet(tuple(ranked[:k]), lambda_cu)


def frontier_set(
    explored,
    obstacle,
    field: DistanceField,
    dilate_radius: int = 3,
    min_cluster_size: int = 5,
    lambda_cu: float = 0.5,
    utility_radius: float = 2.0,
    k: int = 4,
) -> tuple[FrontierSet, list[FrontierCluster]]:
    """Full pipeline; returns the top-k set and every scored cluster."""
    cells = extract_frontier_cells(explored, obstacle, dilate_radius)
    scored = [
        score_cost_utility(cl, explored, field, lambda_cu, utility_radius)
        for cl in cluster_frontiers(cells, min_cluster_size)
    ]
    return select_top_k(scored, k, lambda_cu), scored


@dataclass(frozen=True)
class FrontierConfig:
    dilate_radius: int = 3
    min_cluster_size: int = 5
    lambda_cu: float = 0.5
    utility_radius: float = 2.0
    top_k: int = 4
