"""PPO with continuous virtual actions.

Each episode: reset the environment, roll out T steps with the stochastic
actor, compute GAE advantages and one-step bootstrapped targets, then run K
epochs of shuffled mini-batch updates of the critic (squared TD error) and
the actor (clipped surrogate plus entropy bonus).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .actions import map_virtual, virtual_dim
from .env import RemoteEstimationEnv
from .errors import NonFiniteGradient, ShapeMismatch
from .neural import AdamState, Mlp, adam_step, gaussian_entropy, gaussian_head, gaussian_log_prob
from .neural import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

CURVE_HEADER = ["episode", "sum_reward", "mean_mse", "actor_loss", "critic_loss", "entropy"]


@dataclass
class TrainConfig:
    episodes: int | None = None  # None: ceil(250 * N/M * sqrt(N M))
    steps: int = 128  # T
    epochs: int = 3  # K
    minibatch: int = 128  # B
    discount: float = 0.95  # beta
    gae_smoothing: float = 0.95  # alpha
    clip: float = 0.2  # omega
    entropy_weight: float = 0.01  # w
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    grad_clip: float = 1.0
    targets: str = "onestep"  # or "gae": V + A
    actor_out_scale: float = 0.01
    naive_mapping: bool = False  # scenario 2 benchmark map
    normalize_advantages: bool = True
    reward_scale: float = 1.0
    aoi_input_gain: float = 10.0  # agent-side multiplier on the AoI features
    entropy_per_dim: bool = True  # bonus on entropy / action dim instead of the total

    def __post_init__(self):
        if self.targets not in ("onestep", "gae"):
            raise ValueError("targets must be 'onestep' or 'gae'")
        for name in ("discount", "gae_smoothing", "clip", "actor_lr", "critic_lr"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.steps < 1 or self.epochs < 1 or self.minibatch < 1:
            raise ValueError("steps, epochs and minibatch must be positive")

    def episodes_for(self, N: int, M: int) -> int:
        if self.episodes is not None:
            return self.episodes
        return default_episodes(N, M)


def default_episodes(N: int, M: int) -> int:
    return math.ceil(250 * N / M * math.sqrt(N * M))


def hidden_sizes(N: int, M: int) -> list[int]:
    k = math.sqrt(N / M) * math.log2(M + 1)
    return [math.ceil(70 * k), math.ceil(50 * k), math.ceil(30 * k)]


class Agent:
    """Actor-critic pair plus the virtual-to-real action map of one scenario."""

    def __init__(self, N: int, M: int, scenario: int, p_max: float, rng: np.random.Generator | None = None,
                 naive: bool = False, actor_out_scale: float = 0.01, actor: Mlp | None = None,
                 critic: Mlp | None = None, aoi_input_gain: float = 1.0):
        self.N, self.M, self.scenario, self.p_max, self.naive = N, M, scenario, p_max, naive
        self.aoi_input_gain = float(aoi_input_gain)
        # AoI/tau_max is tiny next to the [-1, 1] gain features; rescale it before the first layer
        self._in_scale = np.ones(N * (M + 1))
        self._in_scale[M:: M + 1] = self.aoi_input_gain
        self.action_dim = N if (naive and scenario == 2) else virtual_dim(scenario, N, M)
        obs_dim = N * (M + 1)
        hidden = hidden_sizes(N, M)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.actor = actor or Mlp([obs_dim, *hidden, 2 * self.action_dim], head="gaussian", rng=rng,
                                  out_scale=actor_out_scale)
        self.critic = critic or Mlp([obs_dim, *hidden, 1], head="identity", rng=rng)
        if self.actor.sizes[0] != obs_dim or self.actor.out_dim != self.action_dim:
            raise ShapeMismatch("actor network does not fit this instance and scenario")
        if self.critic.sizes[0] != obs_dim or self.critic.sizes[-1] != 1:
            raise ShapeMismatch("critic network does not fit this instance")

    def _inputs(self, obs):
        return np.asarray(obs, dtype=float) * self._in_scale

    def policy(self, obs):
        out = self.actor.forward(self._inputs(obs))
        d = self.action_dim
        return out[..., :d], out[..., d:]

    def value(self, obs):
        return self.critic.forward(self._inputs(obs))[..., 0]

    def to_action(self, virtual):
        return map_virtual(self.scenario, virtual, self.N, self.M, self.p_max, naive=self.naive)

    def act(self, obs, rng: np.random.Generator | None = None):
        """Sampled virtual action (or the mean when ``rng`` is None) and its log-density."""
        mean, std = self.policy(obs)
        virtual, logp, _ = gaussian_head(mean, std, rng)
        return virtual, float(logp)

    def meta(self) -> dict:
        return {"N": self.N, "M": self.M, "scenario": self.scenario, "p_max": self.p_max, "naive": self.naive,
                "aoi_input_gain": self.aoi_input_gain}

    def save(self, path) -> None:
        save_checkpoint(path, {"actor": self.actor, "critic": self.critic}, meta=self.meta())

    @classmethod
    def load(cls, path) -> "Agent":
        nets, meta = load_checkpoint(path)
        return cls(meta["N"], meta["M"], meta["scenario"], meta["p_max"], naive=meta.get("naive", False),
                   actor=nets["actor"], critic=nets["critic"], aoi_input_gain=meta.get("aoi_input_gain", 1.0))


@dataclass
class Trajectory:
    obs: np.ndarray  # (T+1, obs_dim), last row is the bootstrap state
    actions: np.ndarray  # (T, action_dim) virtual actions
    logp: np.ndarray  # (T,) behaviour log-densities
    rewards: np.ndarray  # (T,)
    values: np.ndarray  # (T+1,)
    costs: np.ndarray  # (T,) summed MSE charged each step
    advantages: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __len__(self):
        return len(self.rewards)


def collect(env: RemoteEstimationEnv, agent: Agent, T: int, rng: np.random.Generator,
            reward_scale: float = 1.0, deterministic: bool = False) -> Trajectory:
    """Reset ``env`` and roll out T steps of the current policy."""
    state = env.reset(rng)
    obs = np.empty((T + 1, env.obs_dim))
    actions = np.empty((T, agent.action_dim))
    logp = np.empty(T)
    rewards = np.empty(T)
    for t in range(T):
        obs[t] = env.encode_observation(state)
        virtual, logp[t] = agent.act(obs[t], None if deterministic else rng)
        actions[t] = virtual
        state, rewards[t], _ = env.step(state, agent.to_action(virtual), rng)
    obs[T] = env.encode_observation(state)
    values = agent.value(obs)
    return Trajectory(obs=obs, actions=actions, logp=logp, rewards=rewards * reward_scale, values=values,
                      costs=-rewards)


def compute_gae(rewards, values, discount: float, smoothing: float) -> np.ndarray:
    """A(t) = sum_{k>=t} (discount*smoothing)^(k-t) * delta(k), by backward recursion.

    ``values`` has one more entry than ``rewards`` (the bootstrap state).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != (r.size + 1,):
        raise ValueError("values must have len(rewards) + 1 entries")
    delta = r + discount * v[1:] - v[:-1]
    adv = np.empty_like(delta)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = delta[t] + discount * smoothing * acc
        adv[t] = acc
    return adv


def targets(rewards, values, discount: float) -> np.ndarray:
    """One-step bootstrapped reward-to-go R(t) = r(t) + discount * V(s(t+1))."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    return r + discount * v[1: r.size + 1]


def prepare(traj: Trajectory, config: TrainConfig) -> Trajectory:
    traj.advantages = compute_gae(traj.rewards, traj.values, config.discount, config.gae_smoothing)
    if config.targets == "gae":
        traj.targets = traj.values[:-1] + traj.advantages
    else:
        traj.targets = targets(traj.rewards, traj.values, config.discount)
    return traj


@dataclass
class Optimizers:
    actor: AdamState
    critic: AdamState

    @classmethod
    def for_agent(cls, agent: Agent, config: TrainConfig) -> "Optimizers":
        return cls(AdamState(agent.actor.params, lr=config.actor_lr),
                   AdamState(agent.critic.params, lr=config.critic_lr))


def critic_loss_grad(agent: Agent, obs, target):
    v = agent.value(obs)
    err = target - v
    loss = float(np.mean(err**2))
    grads, _ = agent.critic.backward((-2.0 * err / err.size)[:, None])
    return loss, grads


def actor_loss_grad(agent: Agent, obs, actions, logp_old, adv, clip: float, entropy_weight: float,
                    per_dim: bool = False):
    """Loss -mean(min(p A, clip(p) A)) - w * mean(entropy) and its parameter gradient.

    With ``per_dim`` the bonus uses the entropy divided by the action dimension,
    so its pull on each std does not grow with the size of the action.
    """
    mean, std = agent.policy(obs)
    logp = gaussian_log_prob(actions, mean, std)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surrogate = np.minimum(ratio * adv, clipped * adv)
    entropy = gaussian_entropy(std)
    B = adv.size
    w = entropy_weight / std.shape[1] if per_dim else entropy_weight
    loss = float(-np.mean(surrogate) - w * np.mean(entropy))
    # d surrogate / d ratio is A where the unclipped branch is the active minimum
    inside = (ratio >= 1.0 - clip) & (ratio <= 1.0 + clip)
    active = inside | (ratio * adv < clipped * adv)
    dlogp = -(active * adv * ratio) / B
    diff = actions - mean
    var = std * std
    dmean = dlogp[:, None] * diff / var
    dstd = dlogp[:, None] * (diff * diff / (var * std) - 1.0 / std) - w / (B * std)
    grads, _ = agent.actor.backward(np.concatenate([dmean, dstd], axis=1))
    stats = {"actor_loss": loss, "entropy": float(np.mean(entropy)), "ratio_mean": float(np.mean(ratio))}
    return stats, grads


def update(agent: Agent, traj: Trajectory, config: TrainConfig, opt: Optimizers,
           rng: np.random.Generator) -> dict:
    """K epochs of shuffled mini-batch critic then actor steps on one trajectory."""
    T = len(traj)
    adv = traj.advantages
    if config.normalize_advantages and T > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    obs = traj.obs[:T]
    B = min(config.minibatch, T)
    stats = {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0}
    n = 0
    for _ in range(config.epochs):
        perm = rng.permutation(T)
        for start in range(0, T - B + 1, B):
            idx = perm[start: start + B]
            c_loss, c_grads = critic_loss_grad(agent, obs[idx], traj.targets[idx])
            adam_step(opt.critic, agent.critic.params, c_grads, config.grad_clip)
            a_stats, a_grads = actor_loss_grad(agent, obs[idx], traj.actions[idx], traj.logp[idx], adv[idx],
                                               config.clip, config.entropy_weight, config.entropy_per_dim)
            adam_step(opt.actor, agent.actor.params, a_grads, config.grad_clip)
            stats["critic_loss"] += c_loss
            stats["actor_loss"] += a_stats["actor_loss"]
            stats["entropy"] += a_stats["entropy"]
            n += 1
    return {k: v / n for k, v in stats.items()}


@dataclass
class TrainResult:
    agent: Agent
    best_agent: Agent
    curve: list = field(default_factory=list)  # rows matching CURVE_HEADER
    best_episode: int = -1


def train(instance, scenario: int, config: TrainConfig, rng: np.random.Generator, tau_max: int = 50,
          out_dir=None, reward_timing: str = "post", progress_every: int = 0) -> TrainResult:
    """Run the full training loop; writes checkpoints and curve CSV when ``out_dir`` is given."""
    env = RemoteEstimationEnv(instance, scenario, tau_max=tau_max, reward_timing=reward_timing)
    init_rng, run_rng = rng.spawn(2)
    agent = Agent(env.N, env.M, scenario, instance.budget.p_max, rng=init_rng, naive=config.naive_mapping,
                  actor_out_scale=config.actor_out_scale, aoi_input_gain=config.aoi_input_gain)
    opt = Optimizers.for_agent(agent, config)
    E = config.episodes_for(env.N, env.M)
    result = TrainResult(agent=agent, best_agent=_clone(agent))
    best = -np.inf
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for episode in range(E):
        traj = prepare(collect(env, agent, config.steps, run_rng, reward_scale=config.reward_scale), config)
        try:
            stats = update(agent, traj, config, opt, run_rng)
        except NonFiniteGradient:
            if out is not None:
                agent.save(out / "abort")
            raise
        sum_reward = float(-traj.costs.sum())
        result.curve.append([episode + 1, sum_reward, float(traj.costs.mean()), stats["actor_loss"],
                             stats["critic_loss"], stats["entropy"]])
        if sum_reward > best:
            best = sum_reward
            result.best_agent = _clone(agent)
            result.best_episode = episode + 1
        if progress_every and (episode + 1) % progress_every == 0:
            recent = np.mean([row[2] for row in result.curve[-progress_every:]])
            log.info("scenario %d episode %d/%d mean mse %.4f", scenario, episode + 1, E, recent)
    if out is not None:
        agent.save(out / "final")
        result.best_agent.save(out / "best")
        write_curve(out / "curve.csv", result.curve)
    return result


def _clone(agent: Agent) -> Agent:
    return Agent(agent.N, agent.M, agent.scenario, agent.p_max, naive=agent.naive, actor=agent.actor.copy(),
                 critic=agent.critic.copy(), aoi_input_gain=agent.aoi_input_gain)


def write_curve(path, rows) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for row in rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def run_policy(env: RemoteEstimationEnv, policy, steps: int, rng: np.random.Generator) -> float:
    """Undiscounted mean over ``steps`` of the summed MSE under ``policy(state) -> action``.

    The environment starts from a reset and is never reset again.
    """
    state = env.reset(rng)
    total = 0.0
    for _ in range(steps):
        state, reward, _ = env.step(state, policy(state), rng)
        total -= reward
    return total / steps


def evaluate(agent: Agent, instance, scenario: int, steps: int = 10_000, rng: np.random.Generator | None = None,
             tau_max: int = 50, reward_timing: str = "post") -> float:
    """Average summed MSE of the deterministic (mean-action) policy."""
    if agent.scenario != scenario or agent.N != instance.N or agent.M != instance.M:
        raise ShapeMismatch("checkpoint does not match instance/scenario")
    env = RemoteEstimationEnv(instance, scenario, tau_max=tau_max, reward_timing=reward_timing)
    rng = rng if rng is not None else np.random.default_rng(0)

    def policy(state):
        virtual, _ = agent.act(env.encode_observation(state), None)
        return agent.to_action(virtual)

    return run_policy(env, policy, steps, rng)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
