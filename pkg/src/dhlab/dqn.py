"""
From-scratch Deep Q-Network for supply-temperature control: a two-hidden-
layer MLP value network, a ring replay buffer with uniform sampling,
linearly annealed ε-greedy exploration and a periodically synced target
network.

Agent 1 acts by increments on the previous supply temperature; Agent 2 by
bounded offsets from the water-curve baseline.  Per training episode a
weather season is drawn at random from the training-city pool.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .mdp import (ACTION_DELTAS, BASELINE_DELTA, EpisodeRunner, INCREMENT,
                  N_ACTIONS, TargetSchedule, observation_dim)
from .optim import Adam, clip_grad_norm
from .weather import WeatherSeries

OBS_TEMP_OFFSET = 18.0   # fixed affine map (°C - 18)/10 for temperatures
OBS_TEMP_SCALE = 10.0
GRAD_CLIP = 10.0

CHECKPOINT_VERSION = 1


class DqnError(RuntimeError):
    pass


class TrainingDiverged(DqnError):
    pass


@dataclass
class DqnConfig:
    lr: float = 0.001
    buffer_capacity: int = 100_000    # desk-scale default; 1e6 by config
    batch: int = 32
    episodes: int = 300
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.8
    target_update_every: int = 200
    gamma: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0.0 < self.eps_fraction <= 1.0:
            raise ValueError("eps_fraction must lie in (0, 1]")


def epsilon_at(step: int, total_steps: int, config: DqnConfig) -> float:
    """Linear anneal from eps_start to eps_end over the first
    eps_fraction of training, constant afterwards."""
    if total_steps <= 0:
        raise ValueError("total_steps must be > 0")
    anneal = config.eps_fraction * total_steps
    frac = min(step / anneal, 1.0)
    return config.eps_start + frac * (config.eps_end - config.eps_start)


def obs_normalizer(n_apartments: int) -> Tuple[np.ndarray, np.ndarray]:
    """Offset/scale vectors for a flattened observation window: the
    temperature entries map through (v - 18)/10, sin/cos pass through."""
    frame = np.zeros(4 + n_apartments)
    scale = np.ones(4 + n_apartments)
    frame[[0, 1]] = OBS_TEMP_OFFSET
    scale[[0, 1]] = OBS_TEMP_SCALE
    frame[4:] = OBS_TEMP_OFFSET
    scale[4:] = OBS_TEMP_SCALE
    return np.tile(frame, 24), np.tile(scale, 24)


class QNetwork:
    """MLP action-value network: obs -> two ReLU layers of 64 -> 13 values."""

    def __init__(self, input_dim: int, n_actions: int = N_ACTIONS,
                 hidden: int = 64, seed: int = 0):
        self.input_dim = input_dim
        self.n_actions = n_actions
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        he = lambda n_in, n_out: rng.normal(
            0.0, np.sqrt(2.0 / n_in), (n_in, n_out))
        self.params = {
            "W0": he(input_dim, hidden), "b0": np.zeros(hidden),
            "W1": he(hidden, hidden), "b1": np.zeros(hidden),
            "W2": he(hidden, n_actions), "b2": np.zeros(n_actions),
        }

    def forward(self, x: np.ndarray, return_cache: bool = False):
        x = np.atleast_2d(x)
        z0 = x @ self.params["W0"] + self.params["b0"]
        a0 = np.maximum(z0, 0.0)
        z1 = a0 @ self.params["W1"] + self.params["b1"]
        a1 = np.maximum(z1, 0.0)
        q = a1 @ self.params["W2"] + self.params["b2"]
        if return_cache:
            return q, (x, z0, a0, z1, a1)
        return q

    def backward(self, cache, dq: np.ndarray):
        x, z0, a0, z1, a1 = cache
        grads = {}
        grads["W2"] = a1.T @ dq
        grads["b2"] = dq.sum(axis=0)
        da1 = dq @ self.params["W2"].T
        dz1 = da1 * (z1 > 0)
        grads["W1"] = a0.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        da0 = dz1 @ self.params["W1"].T
        dz0 = da0 * (z0 > 0)
        grads["W0"] = x.T @ dz0
        grads["b0"] = dz0.sum(axis=0)
        return grads

    def copy_weights_from(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            self.params[k] = v.copy()

    def save(self, path) -> None:
        np.savez(path, version=CHECKPOINT_VERSION, input_dim=self.input_dim,
                 n_actions=self.n_actions, hidden=self.hidden,
                 **{f"param_{k}": v for k, v in self.params.items()})

    @classmethod
    def load(cls, path) -> "QNetwork":
        d = np.load(path)
        if int(d["version"]) != CHECKPOINT_VERSION:
            raise DqnError(f"unsupported checkpoint version {d['version']}")
        net = cls(int(d["input_dim"]), int(d["n_actions"]), int(d["hidden"]))
        for k in list(net.params):
            net.params[k] = d[f"param_{k}"]
        return net


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.empty((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.empty((capacity, obs_dim), dtype=np.float32)
        self.actions = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity, dtype=np.float64)
        self.dones = np.empty(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def push(self, obs, action, reward, next_obs, done) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch: int):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx], self.dones[idx])


def td_update(net: QNetwork, target_net: QNetwork, batch, config: DqnConfig,
              opt: Adam) -> float:
    """One gradient step on the mean squared TD error of the chosen
    actions; returns the pre-step loss."""
    obs, actions, rewards, next_obs, dones = batch
    q_next = target_net.forward(next_obs).max(axis=1)
    y = rewards + config.gamma * q_next * (~dones)
    q, cache = net.forward(obs, return_cache=True)
    B = len(actions)
    q_sel = q[np.arange(B), actions]
    err = q_sel - y
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite TD loss (|err| max {np.abs(err).max()})")
    dq = np.zeros_like(q)
    dq[np.arange(B), actions] = 2.0 * err / B
    grads = net.backward(cache, dq)
    clip_grad_norm(grads, GRAD_CLIP)
    opt.step(net.params, grads)
    return loss


def greedy_policy(net: QNetwork, n_apartments: int) -> Callable:
    """Deterministic argmax policy on raw observation windows (ties break
    to the lowest action index)."""
    offset, scale = obs_normalizer(n_apartments)

    def policy(obs: np.ndarray) -> int:
        q = net.forward((obs - offset) / scale)[0]
        return int(np.argmax(q))

    return policy


@dataclass
class TrainingLogRow:
    episode: int
    total_reward: float
    epsilon: float
    loss_mean: float


def save_training_log(rows: Sequence[TrainingLogRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["episode", "total_reward", "epsilon", "loss_mean"])
        for r in rows:
            w.writerow([r.episode, f"{r.total_reward:.4f}",
                        f"{r.epsilon:.4f}", f"{r.loss_mean:.6f}"])


def train_agent(kind: str, env, baseline, weather_pool: Sequence[WeatherSeries],
                config: DqnConfig, schedule: Optional[TargetSchedule] = None
                ) -> Tuple[QNetwork, List[float], List[TrainingLogRow]]:
    """Train a DQN agent over whole-season episodes.

    ``kind`` is ``mdp.INCREMENT`` (Agent 1) or ``mdp.BASELINE_DELTA``
    (Agent 2, which requires a fitted water curve as ``baseline``).  The
    environment may be ground truth or the surrogate.  Deterministic in
    ``config.seed``.
    """
    if kind not in (INCREMENT, BASELINE_DELTA):
        raise DqnError(f"unknown agent kind {kind!r}")
    if schedule is None:
        schedule = TargetSchedule()
    if not weather_pool:
        raise DqnError("weather_pool must be non-empty")
    rng = np.random.default_rng(config.seed)
    n_out = env.n_outputs
    obs_dim = observation_dim(n_out)
    offset, scale = obs_normalizer(n_out)
    net = QNetwork(obs_dim, seed=config.seed)
    target = QNetwork(obs_dim, seed=config.seed)
    target.copy_weights_from(net)
    opt = Adam(lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim)

    steps_per_ep = len(weather_pool[0]) - 119
    total_steps = max(1, config.episodes * steps_per_ep)
    global_step = 0
    reward_history: List[float] = []
    log: List[TrainingLogRow] = []

    for ep in range(config.episodes):
        weather = weather_pool[int(rng.integers(0, len(weather_pool)))]
        runner = EpisodeRunner(env, weather, schedule, baseline, kind)
        obs = (runner.observation() - offset) / scale
        ep_reward = 0.0
        ep_losses: List[float] = []
        eps = epsilon_at(global_step, total_steps, config)
        while not runner.done:
            eps = epsilon_at(global_step, total_steps, config)
            if rng.random() < eps:
                a = int(rng.integers(0, N_ACTIONS))
            else:
                a = int(np.argmax(net.forward(obs)[0]))
            r, next_obs_raw, done = runner.step(a)
            next_obs = (next_obs_raw - offset) / scale
            buffer.push(obs, a, r, next_obs, done)
            ep_reward += r
            if buffer.size >= config.batch:
                loss = td_update(net, target, buffer.sample(rng, config.batch),
                                 config, opt)
                ep_losses.append(loss)
            global_step += 1
            if global_step % config.target_update_every == 0:
                target.copy_weights_from(net)
            obs = next_obs
        reward_history.append(ep_reward)
        log.append(TrainingLogRow(ep, ep_reward, eps,
                                  float(np.mean(ep_losses)) if ep_losses
                                  else float("nan")))
        if len(reward_history) >= 40:
            recent = float(np.mean(reward_history[-20:]))
            best = max(float(np.mean(reward_history[i:i + 20]))
                       for i in range(0, len(reward_history) - 19, 5))
            if best < 0 and recent < 10.0 * best:
                raise TrainingDiverged(
                    f"moving-average reward worsened 10x by episode {ep} "
                    f"(recent {recent:.1f}, best {best:.1f})")
    return net, reward_history, log
