"""Reusable experiment drivers: the baseline comparison and the cue learnability run."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .agents import LearnedPolicy
from .config import ExperimentConfig, eval_preset
from .cueworld import cue_config, cue_task
from .metrics import MetricsSummary, summarize
from .policy import FrontierPolicy
from .runner import Task, initial_decision, run_batch
from .simworld import generate_episodes, generate_scene
from .trainer import TrainResult, train_policy

SUITE_POLICIES = ("random_walk", "nearest_frontier", "classical_frontier", "random_map_sample", "cost_utility")

# held-out cue scenes start here; training uses seeds 0, 1, 2, ...
CUE_EVAL_SEED0 = 1_000_000


def baseline_tasks(n: int, config: ExperimentConfig | None = None, first_scene: int = 1000, seed: int = 0) -> list[Task]:
    """One episode in each of ``n`` freshly generated scenes."""
    cfg = config or eval_preset()
    tasks = []
    for i in range(n):
        scene = generate_scene(cfg.scene, first_scene + i, f"scene_{first_scene + i:05d}", cfg.agent.radius)
        (spec,) = generate_episodes(scene, 1, seed, cfg.agent, cfg.scene.num_goal_categories, cfg.run.min_episode_length)
        tasks.append(Task(i, scene, spec))
    return tasks


@dataclass
class SuiteResult:
    summaries: dict[str, MetricsSummary]
    results: dict[str, list] = field(repr=False, default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)


def baseline_suite(
    tasks: list[Task],
    config: ExperimentConfig | None = None,
    policies=SUITE_POLICIES,
    seed: int = 0,
    workers: int = 1,
) -> SuiteResult:
    cfg = config or eval_preset()
    out = SuiteResult({})
    for name in policies:
        t0 = time.time()
        res, _ = run_batch(tasks, name, cfg, seed, workers)
        out.seconds[name] = time.time() - t0
        out.results[name] = res
        out.summaries[name] = summarize(res)
    return out


class CueTasks:
    """task_fn for the trainer: cue scene ``i`` (picklable)."""

    def __init__(self, config: ExperimentConfig):
        self.config = config

    def __call__(self, i):
        t = cue_task(i, self.config)
        return t.scene, t.spec, t.geometry


def chosen_side(goal_cell, agent_cell, resolution: float, min_offset: float = 2.0) -> int:
    """-1 / +1 when the goal lies at least ``min_offset`` metres to the -y / +y side, else 0.

    Doorway frontiers sit about 3 m to either side of the start; clutter
    clusters inside the hub stay well within 2 m.
    """
    dy = (goal_cell[1] - agent_cell[1]) * resolution
    return 0 if abs(dy) < min_offset else int(np.sign(dy))


def cue_accuracy(policy, config: ExperimentConfig, n: int = 200, first_seed: int = CUE_EVAL_SEED0) -> float:
    """Fraction of held-out cue scenes whose first frontier choice is the goal-side doorway."""
    ok = 0
    for i in range(n):
        t = cue_task(first_seed + i, config)
        dec, _, smap, cell = initial_decision(t.scene, t.spec, policy, config, 0, first_seed + i)
        if dec.goal is not None and dec.goal.kind == "frontier":
            ok += chosen_side(dec.goal.cells[0], cell, smap.resolution) == t.goal_side
    return ok / n


def train_cue(
    config: ExperimentConfig | None = None,
    seed: int = 0,
    total_env_steps: int | None = None,
    episodes_per_update: int | None = None,
    workers: int = 1,
    callback=None,
) -> TrainResult:
    cfg = config or cue_config()
    return train_policy(CueTasks(cfg), cfg, seed, total_env_steps, episodes_per_update, workers, callback=callback)


def learned(result: TrainResult, greedy: bool = True) -> LearnedPolicy:
    return LearnedPolicy(FrontierPolicy(result.params, result.net, greedy, result.normalizer))
