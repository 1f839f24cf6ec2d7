"""Goal-selection policies sharing one interface.

The runner owns mapping, frontier extraction, the visible-target shortcut,
fallback goals and local planning. A policy only answers "which long-term
goal next?" given a :class:`DecisionView`, so every policy runs through the
same code path. ``random_walk`` is the exception: it picks low-level actions
directly and never consults the planner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Action, ArgumentError
from .frontier import FrontierCluster, FrontierSet
from .gridmap import SemanticMap
from .planner import DistanceField
from .policy import FrontierPolicy, GoalCommand, MaskedDistribution, load_checkpoint


@dataclass
class DecisionView:
    """Everything a policy may look at when a global decision is due."""

    semantic_map: SemanticMap
    category: int
    frontiers: FrontierSet  # top-k by cost-utility score
    clusters: list[FrontierCluster]  # every scored cluster
    agent_field: DistanceField  # geodesic distance from the agent cell
    agent_cell: tuple[int, int]
    free: np.ndarray  # traversable cells of the planning map
    policy_input: Callable[[], np.ndarray] = field(repr=False, default=None)


@dataclass
class Decision:
    goal: GoalCommand | None
    # filled only by learned policies, for the rollout buffer
    obs: np.ndarray | None = None
    mask: np.ndarray | None = None
    action: int = -1
    logp: float | None = None
    value: float | None = None


class GoalPolicy:
    name = "base"
    low_level = False
    needs_policy_input = False

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def choose(self, view: DecisionView, rng: np.random.Generator) -> Decision:
        raise NotImplementedError


class RandomWalk(GoalPolicy):
    """Uniform over the full action set, stop included."""

    name = "random_walk"
    low_level = True

    def action(self, rng: np.random.Generator) -> Action:
        return Action(int(rng.integers(len(Action))))


def _reachable(view: DecisionView, cell) -> bool:
    return view.agent_field.reachable(cell)


class NearestFrontier(GoalPolicy):
    """Goal-agnostic: the single frontier cell closest (geodesically) to the agent."""

    name = "nearest_frontier"

    def choose(self, view, rng):
        best, best_d = None, np.inf
        vals = view.agent_field.values
        for cl in view.clusters:
            d = vals[cl.cells[:, 0], cl.cells[:, 1]]
            k = int(np.argmin(d))
            if d[k] < best_d:
                best_d, best = float(d[k]), cl.cells[k]
        if best is None:
            return Decision(None)
        return Decision(GoalCommand("frontier", np.array([best])))


class ClassicalFrontier(GoalPolicy):
    """Nearest cluster by geodesic distance to its centroid, goal at the centroid."""

    name = "classical_frontier"

    def choose(self, view, rng):
        best, best_d = None, np.inf
        for cl in view.clusters:
            d = view.agent_field.at(cl.centroid)
            if d < best_d:
                best_d, best = d, cl
        if best is None:
            return Decision(None)
        return Decision(GoalCommand("frontier", np.array([best.centroid])))


class RandomMapSample(GoalPolicy):
    """Uniform over explored, traversable cells the agent can reach."""

    name = "random_map_sample"

    def choose(self, view, rng):
        cand = (view.semantic_map.explored > 0) & view.free & np.isfinite(view.agent_field.values)
        cells = np.argwhere(cand)
        if len(cells) == 0:
            return Decision(None)
        cell = cells[int(rng.integers(len(cells)))]
        return Decision(GoalCommand("map_sample", cell[None]))


class CostUtility(GoalPolicy):
    """Highest U - lambda*C cluster; no learning."""

    name = "cost_utility"

    def choose(self, view, rng):
        if len(view.frontiers) == 0:
            return Decision(None)
        cl = view.frontiers.clusters[0]
        return Decision(GoalCommand("frontier", np.array([cl.centroid]), 0))


class UniformFrontier(GoalPolicy):
    """Uniform over the top-k frontier channels: the learned policy with no learning."""

    name = "uniform_frontier"

    def choose(self, view, rng):
        n = len(view.frontiers)
        if n == 0:
            return Decision(None)
        a = int(rng.integers(n))
        return Decision(GoalCommand("frontier", np.array([view.frontiers.clusters[a].centroid]), a))


class LearnedPolicy(GoalPolicy):
    """Masked categorical over the top-k frontier channels from the policy network."""

    name = "learned"
    needs_policy_input = True

    def __init__(self, policy: FrontierPolicy, name: str = "learned"):
        self.policy = policy
        self.name = name

    @classmethod
    def from_checkpoint(cls, path, greedy: bool = False) -> "LearnedPolicy":
        params, net, _, norm = load_checkpoint(path)
        return cls(FrontierPolicy(params, net, greedy, norm))

    def choose(self, view, rng):
        n = len(view.frontiers)
        if n == 0:
            return Decision(None)
        k = self.policy.net.num_actions
        obs = view.policy_input()
        mask = view.frontiers.mask(k)
        logits, value = self.policy.evaluate(obs, view.category)
        dist = MaskedDistribution(logits, mask)
        a = int(dist.mode() if self.policy.greedy else dist.sample(rng))
        goal = GoalCommand("frontier", np.array([view.frontiers.clusters[a].centroid]), a)
        return Decision(goal, obs, mask, a, float(dist.log_prob(a)), value)


_BASELINES = {
    cls.name: cls
    for cls in (RandomWalk, ClassicalFrontier, RandomMapSample, CostUtility, NearestFrontier, UniformFrontier)
}


def baseline_policies() -> dict[str, GoalPolicy]:
    """Fresh instances of every policy that needs no trained weights."""
    return {name: cls() for name, cls in _BASELINES.items()}


def make_policy(spec: str, greedy: bool = False) -> GoalPolicy:
    """A baseline by name, or a learned policy from a checkpoint path."""
    if spec in _BASELINES:
        return _BASELINES[spec]()
    if spec.endswith(".npz"):
        return LearnedPolicy.from_checkpoint(spec, greedy)
    raise ArgumentError(f"unknown policy {spec!r}; expected one of {sorted(_BASELINES)} or a .npz checkpoint")
