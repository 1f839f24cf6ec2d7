"""PPO training loop for the frontier-selection policy.

Episodes are collected in fixed-size batches with frozen weights, then the
buffer is consumed by one PPO update. Each episode's randomness depends only
on (seed, episode index), so the result does not depend on the worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .agents import LearnedPolicy
from .config import ExperimentConfig
from .policy import Adam, FrontierPolicy, NetConfig, ObsNormalizer, RolloutBuffer, init_params, ppo_update
from .runner import run_episode

log = logging.getLogger(__name__)

# task_fn(episode_index) -> (scene, spec, geometry or None)
TaskFn = Callable[[int], tuple]


def net_for(config: ExperimentConfig) -> NetConfig:
    m = config.map
    side = m.policy_side
    return NetConfig(
        input_dim=(m.num_channels + config.frontier.top_k) * side * side,
        num_categories=m.num_semantic,
        num_actions=config.frontier.top_k,
    )


@dataclass
class TrainResult:
    params: dict
    net: NetConfig
    normalizer: ObsNormalizer
    env_steps: int
    episodes: int
    updates: int
    history: list = field(default_factory=list)


def _collect(args):
    task_fn, params, net, norm, config, seed, idx = args
    scene, spec, geo = task_fn(idx)
    pol = LearnedPolicy(FrontierPolicy(params, net, greedy=False, normalizer=norm))
    out = run_episode(scene, spec, pol, config, seed, idx, train=True, geometry=geo)
    return out.buffer, out.result


def train_policy(
    task_fn: TaskFn,
    config: ExperimentConfig,
    seed: int = 0,
    total_env_steps: int | None = None,
    episodes_per_update: int | None = None,
    workers: int = 1,
    params: dict | None = None,
    net: NetConfig | None = None,
    normalizer: ObsNormalizer | None = None,
    callback=None,
) -> TrainResult:
    """Masked PPO on episodes from ``task_fn`` until ``total_env_steps`` simulator steps."""
    tcfg = config.train
    total = tcfg.total_env_steps if total_env_steps is None else total_env_steps
    per_update = episodes_per_update or tcfg.episodes_per_update
    net = net or net_for(config)
    params = params if params is not None else init_params(net, seed=tcfg.policy_seed + seed)
    norm = normalizer or ObsNormalizer(net.input_dim)
    opt = Adam(params, config.ppo.lr, eps=config.ppo.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF5E]))
    buf = RolloutBuffer()
    steps = episodes = updates = 0
    history = []
    t0 = time.time()
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while steps < total:
            idx = range(episodes, episodes + per_update)
            args = [(task_fn, params, net, norm, config, seed, i) for i in idx]
            outs = list(pool.map(_collect, args)) if pool else [_collect(a) for a in args]
            episodes += per_update
            succ = 0
            for b, res in outs:
                steps += res.steps
                succ += res.success
                buf.extend(b)
            if buf.complete_length() == 0:
                continue
            n = buf.complete_length()
            raw = np.stack(buf.obs[:n])
            if norm.count == 0:
                # first batch: nothing to standardize with yet, so seed the
                # statistics and collect again under them
                norm.update(raw)
                buf.clear()
                continue
            params, stats = ppo_update(params, buf, config.ppo, opt, rng, norm)
            norm.update(raw)
            updates += 1
            stats.update(env_steps=steps, episodes=episodes, success=succ / per_update, seconds=time.time() - t0)
            history.append(stats)
            if updates % max(1, tcfg.log_every) == 0:
                log.info("update %d steps %d success %.2f loss %.4f", updates, steps, stats["success"], stats.get("loss", 0.0))
            if callback is not None:
                callback(updates, params, stats)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(params, net, norm, steps, episodes, updates, history)
