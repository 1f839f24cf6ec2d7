"""Frontier-selection policy: masked categorical actor-critic trained with PPO.

The network is small enough to run on numpy with hand-written backprop:

    pooled map --fc--> 256 --relu--+
                                   +--concat--> 288 --fc--> 128 --fc--> 128 --+--> 4 logits
    goal category --embed--> 32 ---+                                          +--> value
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ArgumentError, FseError

MASK_VALUE = -1e9
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 19 * 30 * 30
    encoder_dim: int = 256
    embed_dim: int = 32
    hidden_dim: int = 128
    num_categories: int = 6
    num_actions: int = 4


@dataclass(frozen=True)
class PPOConfig:
    lr: float = 2.5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5


REFERENCE_PPO = PPOConfig(lr=2.5e-5)

PARAM_ORDER = (
    "enc_w", "enc_b", "emb", "fc1_w", "fc1_b", "fc2_w", "fc2_b", "actor_w", "actor_b", "critic_w", "critic_b",
)


def config_hash(obj) -> str:
    payload = json.dumps(obj if isinstance(obj, dict) else asdict(obj), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def init_params(cfg: NetConfig, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def dense(n_in, n_out, gain):
        return (rng.standard_normal((n_in, n_out)) * gain / math.sqrt(n_in)).astype(dtype)

    joint = cfg.encoder_dim + cfg.embed_dim
    return {
        "enc_w": dense(cfg.input_dim, cfg.encoder_dim, math.sqrt(2)),
        "enc_b": np.zeros(cfg.encoder_dim, dtype),
        "emb": (rng.standard_normal((cfg.num_categories, cfg.embed_dim))).astype(dtype),
        "fc1_w": dense(joint, cfg.hidden_dim, math.sqrt(2)),
        "fc1_b": np.zeros(cfg.hidden_dim, dtype),
        "fc2_w": dense(cfg.hidden_dim, cfg.hidden_dim, math.sqrt(2)),
        "fc2_b": np.zeros(cfg.hidden_dim, dtype),
        "actor_w": dense(cfg.hidden_dim, cfg.num_actions, 0.01),
        "actor_b": np.zeros(cfg.num_actions, dtype),
        "critic_w": dense(cfg.hidden_dim, 1, 1.0),
        "critic_b": np.zeros(1, dtype),
    }


def forward(params, x, cats):
    """Batched forward pass; returns (logits, values, cache for backward)."""
    x = np.asarray(x, dtype=params["enc_w"].dtype).reshape(len(cats), -1)
    cats = np.asarray(cats, dtype=np.int64)
    e_pre = x @ params["enc_w"] + params["enc_b"]
    e = np.maximum(e_pre, 0.0)
    z = np.concatenate([e, params["emb"][cats]], axis=1)
    h1_pre = z @ params["fc1_w"] + params["fc1_b"]
    h1 = np.maximum(h1_pre, 0.0)
    h2_pre = h1 @ params["fc2_w"] + params["fc2_b"]
    h2 = np.maximum(h2_pre, 0.0)
    logits = h2 @ params["actor_w"] + params["actor_b"]
    values = (h2 @ params["critic_w"] + params["critic_b"])[:, 0]
    return logits, values, (x, cats, e, z, h1, h2)


def backward(params, cache, dlogits, dvalues):
    x, cats, e, z, h1, h2 = cache
    g = {}
    g["actor_w"] = h2.T @ dlogits
    g["actor_b"] = dlogits.sum(axis=0)
    g["critic_w"] = h2.T @ dvalues[:, None]
    g["critic_b"] = np.array([dvalues.sum()])
    dh2 = (dlogits @ params["actor_w"].T + dvalues[:, None] @ params["critic_w"].T) * (h2 > 0)
    g["fc2_w"] = h1.T @ dh2
    g["fc2_b"] = dh2.sum(axis=0)
    dh1 = (dh2 @ params["fc2_w"].T) * (h1 > 0)
    g["fc1_w"] = z.T @ dh1
    g["fc1_b"] = dh1.sum(axis=0)
    dz = dh1 @ params["fc1_w"].T
    n_enc = e.shape[1]
    g["emb"] = np.zeros_like(params["emb"])
    np.add.at(g["emb"], cats, dz[:, n_enc:])
    de = dz[:, :n_enc] * (e > 0)
    g["enc_w"] = x.T @ de
    g["enc_b"] = de.sum(axis=0)
    return g


class MaskedDistribution:
    """Categorical over the valid entries of ``mask``; invalid entries get probability 0."""

    def __init__(self, logits, mask):
        logits = np.asarray(logits, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ArgumentError("masked distribution needs at least one valid action")
        self.mask = mask
        self.logits = np.where(mask, logits, MASK_VALUE)
        shifted = self.logits - self.logits.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        self.log_probs = shifted - lse
        self.probs = np.where(mask, np.exp(self.log_probs), 0.0)

    def log_prob(self, action):
        if self.log_probs.ndim == 1:
            return float(self.log_probs[action])
        return np.take_along_axis(self.log_probs, np.asarray(action)[:, None], axis=-1)[:, 0]

    def entropy(self):
        return -np.where(self.mask, self.probs * self.log_probs, 0.0).sum(axis=-1)

    def sample(self, rng: np.random.Generator):
        if self.probs.ndim == 1:
            return int(rng.choice(len(self.probs), p=self.probs))
        u = rng.random(self.probs.shape[0])[:, None]
        return (np.cumsum(self.probs, axis=-1) < u).sum(axis=-1).clip(max=self.probs.shape[-1] - 1)

    def mode(self):
        return int(np.argmax(self.probs)) if self.probs.ndim == 1 else np.argmax(self.probs, axis=-1)


def masked_distribution(logits, mask) -> MaskedDistribution:
    return MaskedDistribution(logits, mask)


# --- losses ---------------------------------------------------------------


def ppo_loss_and_grad(params, batch, cfg: PPOConfig):
    """Clipped surrogate + value + entropy loss and its analytic gradient.

    Gradients reach the logits only through valid entries, so masked logits
    receive exactly zero gradient.
    """
    x, cats, mask, actions = batch["obs"], batch["cats"], batch["mask"], batch["actions"]
    old_logp, adv, ret = batch["logp"], batch["adv"], batch["ret"]
    n = len(actions)
    logits, values, cache = forward(params, x, cats)
    dist = MaskedDistribution(logits, mask)
    logp = dist.log_prob(actions)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_loss = ((values - ret) ** 2).mean()
    ent = dist.entropy()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * ent.mean()

    # d(-min(surr1, surr2))/d logp_a
    use1 = surr1 <= surr2
    inside = (ratio > 1.0 - cfg.clip) & (ratio < 1.0 + cfg.clip)
    g_logp = -np.where(use1 | inside, adv * ratio, 0.0) / n
    onehot = np.zeros_like(dist.probs)
    onehot[np.arange(n), actions] = 1.0
    dlogits = g_logp[:, None] * (onehot - dist.probs)
    # dH/dz_k = -p_k (log p_k + H)
    logp_all = np.where(dist.mask, dist.log_probs, 0.0)
    dent = -dist.probs * (logp_all + ent[:, None])
    dlogits += -cfg.entropy_coef * dent / n
    dlogits = np.where(dist.mask, dlogits, 0.0)
    dvalues = cfg.value_coef * 2.0 * (values - ret) / n
    grads = backward(params, cache, dlogits, dvalues)
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent.mean()),
        "clip_frac": float((~inside).mean()),
        "approx_kl": float((old_logp - logp).mean()),
    }
    return loss, grads, stats, dlogits


class Adam:
    def __init__(self, params, lr, eps=1e-5, betas=(0.9, 0.999)):
        self.lr = lr
        self.eps = eps
        self.b1, self.b2 = betas
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k in PARAM_ORDER:
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return params


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float((grads[k] ** 2).sum()) for k in PARAM_ORDER))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: v * scale for k, v in grads.items()}
    return grads, total


# --- rollouts -------------------------------------------------------------


def compute_gae(rewards, values, dones, last_value: float = 0.0, gamma: float = 0.99, lam: float = 0.95):
    """Generalised advantage estimation; ``dones[t]`` marks the end of an episode at t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        next_v = last_value if t == n - 1 else values[t + 1]
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        adv[t] = gae
    return adv, adv + values


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    cats: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, obs, cat, mask, action, logp, value, reward, done):
        self.obs.append(np.asarray(obs, dtype=np.float32).ravel())
        self.cats.append(int(cat))
        self.masks.append(np.asarray(mask, dtype=bool))
        self.actions.append(int(action))
        self.logps.append(float(logp))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def extend(self, other: "RolloutBuffer"):
        for name in ("obs", "cats", "masks", "actions", "logps", "values", "rewards", "dones"):
            getattr(self, name).extend(getattr(other, name))

    def __len__(self):
        return len(self.actions)

    def complete_length(self) -> int:
        """Records up to and including the last finished episode."""
        for i in range(len(self.dones) - 1, -1, -1):
            if self.dones[i]:
                return i + 1
        return 0

    def batch(self, gamma, lam):
        n = self.complete_length()
        if n == 0:
            raise ArgumentError("no completed episode segment in buffer")
        adv, ret = compute_gae(self.rewards[:n], self.values[:n], self.dones[:n], 0.0, gamma, lam)
        return {
            "obs": np.stack(self.obs[:n]),
            "cats": np.asarray(self.cats[:n]),
            "mask": np.stack(self.masks[:n]),
            "actions": np.asarray(self.actions[:n]),
            "logp": np.asarray(self.logps[:n]),
            "values": np.asarray(self.values[:n]),
            "adv": adv,
            "ret": ret,
        }

    def clear(self):
        for name in ("obs", "cats", "masks", "actions", "logps", "values", "rewards", "dones"):
            getattr(self, name).clear()


class UpdateError(FseError):
    kind = "update"


def ppo_update(params, buffer: RolloutBuffer, cfg: PPOConfig, optimizer: Adam, rng: np.random.Generator, normalizer=None):
    """Several epochs of minibatch PPO; clears the buffer. Returns (params, mean stats).

    The buffer holds raw observations; ``normalizer`` (if given) must be the one
    the rollouts were collected with.
    """
    data = buffer.batch(cfg.gamma, cfg.gae_lambda)
    if normalizer is not None:
        data["obs"] = normalizer.normalize(data["obs"])
    adv = data["adv"]
    if len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    data["adv"] = adv
    n = len(adv)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.minibatch):
            idx = order[s : s + cfg.minibatch]
            mb = {k: v[idx] for k, v in data.items()}
            loss, grads, stats, _ = ppo_loss_and_grad(params, mb, cfg)
            if not math.isfinite(loss):
                raise UpdateError(f"non-finite PPO loss: {stats}")
            grads, gnorm = clip_grad_norm(grads, cfg.max_grad_norm)
            params = optimizer.step(params, grads)
            stats["grad_norm"] = gnorm
            history.append(stats)
    buffer.clear()
    mean = {k: float(np.mean([h[k] for h in history])) for k in history[0]} if history else {}
    return params, mean


class ObsNormalizer:
    """Running per-feature mean and variance; inputs are standardized and clipped.

    Pooled map crops are mostly near zero with a few informative pixels, so
    per-feature scaling matters far more here than in image networks.
    """

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-4):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = clip
        self.eps = eps

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1, len(self.mean))
        n = len(x)
        if n == 0:
            return
        bm, bv = x.mean(axis=0), x.var(axis=0)
        if self.count == 0:
            self.mean, self.var, self.count = bm, bv, float(n)
            return
        tot = self.count + n
        delta = bm - self.mean
        self.mean = self.mean + delta * n / tot
        self.var = (self.var * self.count + bv * n + delta**2 * self.count * n / tot) / tot
        self.count = tot

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, len(self.mean))
        if self.count == 0:
            return x
        return np.clip((x - self.mean) / np.sqrt(self.var + self.eps), -self.clip, self.clip)

    def state(self) -> dict:
        return {"obs_mean": self.mean, "obs_var": self.var, "obs_count": np.array([self.count])}

    @classmethod
    def from_state(cls, d: dict) -> "ObsNormalizer":
        n = cls(len(d["obs_mean"]))
        n.mean = np.array(d["obs_mean"], dtype=np.float64)
        n.var = np.array(d["obs_var"], dtype=np.float64)
        n.count = float(np.asarray(d["obs_count"]).ravel()[0])
        return n


# --- acting ---------------------------------------------------------------


@dataclass(frozen=True)
class GoalCommand:
    kind: str  # "frontier" | "target" | "fallback" | "map_sample" | "hold"
    cells: np.ndarray  # (n, 2)
    index: int = -1


def target_goal(semantic_channel: np.ndarray) -> GoalCommand | None:
    cells = np.argwhere(semantic_channel > 0)
    if len(cells) == 0:
        return None
    return GoalCommand("target", cells)


def nearest_unexplored_cell(explored: np.ndarray, agent_field) -> GoalCommand | None:
    """Unexplored cell with the smallest geodesic distance from the agent."""
    vals = np.where(explored == 0, agent_field.values, np.inf)
    k = int(np.argmin(vals))
    if not np.isfinite(vals.flat[k]):
        return None
    return GoalCommand("fallback", np.array([divmod(k, vals.shape[1])]))


class FrontierPolicy:
    """Learned frontier selector. ``act`` follows the visible-target rule first."""

    def __init__(self, params: dict, net: NetConfig, greedy: bool = False, normalizer: ObsNormalizer | None = None):
        self.params = params
        self.net = net
        self.greedy = greedy
        self.normalizer = normalizer

    def evaluate(self, policy_input, category: int):
        x = np.asarray(policy_input).reshape(1, -1)
        if self.normalizer is not None:
            x = self.normalizer.normalize(x)
        logits, values, _ = forward(self.params, x, [category])
        return logits[0], float(values[0])

    def act(self, policy_input, category: int, frontiers, semantic_map, rng, agent_field=None):
        """Returns (GoalCommand, log_prob, value, mask); log_prob is None when nothing was sampled."""
        target = target_goal(semantic_map.semantic(category))
        if target is not None:
            return target, None, None, None
        if len(frontiers) == 0:
            goal = nearest_unexplored_cell(semantic_map.explored, agent_field) if agent_field is not None else None
            return goal, None, None, None
        mask = frontiers.mask(self.net.num_actions)
        logits, value = self.evaluate(policy_input, category)
        dist = MaskedDistribution(logits, mask)
        a = dist.mode() if self.greedy else dist.sample(rng)
        cl = frontiers.clusters[a]
        goal = GoalCommand("frontier", np.array([cl.centroid]), a)
        return goal, dist.log_prob(a), value, mask


def global_step_schedule(t: int, goal_reached: bool = False, goal_unreachable: bool = False, interval: int = 25) -> bool:
    return t % interval == 0 or goal_reached or goal_unreachable


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(path, params: dict, net: NetConfig, extra: dict | None = None, normalizer: ObsNormalizer | None = None) -> None:
    meta = {"version": CHECKPOINT_VERSION, "net": asdict(net), "config_hash": config_hash(net), "extra": extra or {}}
    arrays = {k: params[k] for k in PARAM_ORDER}
    if normalizer is not None:
        arrays.update(normalizer.state())
    with open(path, "wb") as f:
        np.savez(f, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Returns (params, net config, extra metadata, normalizer or None)."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise FseError(f"cannot read checkpoint {path}: {exc}") from None
    with data:
        if "__meta__" not in data:
            raise FseError(f"{path} is not a policy checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise FseError(f"unsupported checkpoint version {meta.get('version')}")
        net = NetConfig(**meta["net"])
        if config_hash(net) != meta["config_hash"]:
            raise FseError("checkpoint config hash mismatch")
        params = {k: data[k].copy() for k in PARAM_ORDER}
        norm = ObsNormalizer.from_state({k: data[k] for k in ("obs_mean", "obs_var", "obs_count")}) if "obs_mean" in data else None
    return params, net, meta.get("extra", {}), norm
