"""
MDP wrapper around a thermal model (ground truth or learned surrogate):
observation windows, discrete supply-temperature actions, comfort reward
and episode mechanics.

One episode is a heating season: 119 warm-up hours driven by the baseline
water curve (building realistic history, no agent transitions), then 1883
hourly decision steps.  At each decision step the agent sees the last 24
completed hours (outdoor temperature, applied supply temperature, cyclic
hour-of-day encoding and the occupied indoor temperatures), picks one of
13 discrete actions, and receives the negative sum of absolute deviations
of the indoor temperatures from their targets.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .thermal import (Building, BuildingState, SubstationCommand,
                      T_SUPPLY_MAX, T_SUPPLY_MIN)
from .weather import WeatherSeries

WINDOW_HOURS = 24
WARMUP_STEPS = 119
DECISION_STEPS = 1883

#: The 13 discrete actions, ascending; index 6 is the no-op.
ACTION_DELTAS = np.arange(-6, 7) * 0.5
N_ACTIONS = len(ACTION_DELTAS)

INCREMENT = "increment"            # Agent 1: delta on the previous T_s
BASELINE_DELTA = "baseline_delta"  # Agent 2: delta on the water-curve T_s

Policy = Callable[[np.ndarray], int]


class MdpError(ValueError):
    pass


@dataclass(frozen=True)
class TargetSchedule:
    """Contractual indoor target, optionally different by day and night."""

    day_value: float = 18.0
    night_value: float = 18.0
    day_start: int = 6
    day_end: int = 22

    def __post_init__(self):
        for v in (self.day_value, self.night_value):
            if not 10.0 <= v <= 30.0:
                raise MdpError("targets must lie in [10, 30] °C")

    def target_at(self, hour_of_day: int) -> float:
        if self.day_start <= hour_of_day < self.day_end:
            return self.day_value
        return self.night_value

    def target_vector(self, hour_of_day: int, n: int) -> np.ndarray:
        return np.full(n, self.target_at(hour_of_day))


def reward(t_air: Sequence[float], targets: Sequence[float]) -> float:
    """Comfort reward: negative sum of absolute target deviations."""
    t_air = np.asarray(t_air, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if t_air.shape != targets.shape:
        raise MdpError(f"shape mismatch: {t_air.shape} vs {targets.shape}")
    return float(-np.abs(t_air - targets).sum())


def apply_action(kind: str, prev_t_supply: float, baseline_t_supply: float,
                 action_index: int) -> float:
    """Map a discrete action to the next supply temperature, clamped to the
    admissible band."""
    if not 0 <= action_index < N_ACTIONS:
        raise MdpError(f"action_index {action_index} out of range")
    delta = ACTION_DELTAS[action_index]
    if kind == INCREMENT:
        base = prev_t_supply
    elif kind == BASELINE_DELTA:
        base = baseline_t_supply
    else:
        raise MdpError(f"unknown action kind {kind!r}")
    return float(np.clip(base + delta, T_SUPPLY_MIN, T_SUPPLY_MAX))


def discounted_return(rewards: Sequence[float], gamma: float = 0.9) -> float:
    if not 0.0 <= gamma < 1.0:
        raise MdpError("gamma must lie in [0, 1)")
    rewards = np.asarray(rewards, dtype=float)
    return float(np.sum(rewards * gamma ** np.arange(len(rewards))))


@dataclass
class Transition:
    state: np.ndarray
    action_index: int
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        if not 0 <= self.action_index < N_ACTIONS:
            raise MdpError("action_index out of range")


class ObservationWindow:
    """Rolling 24-hour history of (t_out, t_supply, sin h, cos h, t_air…)."""

    def __init__(self, n_apartments: int):
        self.n_apartments = n_apartments
        self.frame_dim = 4 + n_apartments
        self._frames = deque(maxlen=WINDOW_HOURS)

    def push(self, t_out: float, t_supply: float, hour_of_day: int,
             t_air: np.ndarray) -> None:
        ang = 2.0 * np.pi * hour_of_day / 24.0
        frame = np.empty(self.frame_dim)
        frame[0] = t_out
        frame[1] = t_supply
        frame[2] = np.sin(ang)
        frame[3] = np.cos(ang)
        frame[4:] = t_air
        self._frames.append(frame)

    @property
    def full(self) -> bool:
        return len(self._frames) == WINDOW_HOURS

    def flatten(self) -> np.ndarray:
        if not self.full:
            raise MdpError("observation window not yet full")
        return np.concatenate(self._frames)


def observation_dim(n_apartments: int) -> int:
    return WINDOW_HOURS * (4 + n_apartments)


# ---------------------------------------------------------------------------
# Environment models
# ---------------------------------------------------------------------------

class GroundTruthEnv:
    """Episode environment backed by the RC building simulator."""

    def __init__(self, building: Building, m_dot: float = 5.0):
        self.building = building
        self.m_dot = m_dot
        self.state: Optional[BuildingState] = None
        self.last_t_air_full: Optional[np.ndarray] = None

    @property
    def n_outputs(self) -> int:
        return self.building.n_occupied

    def reset(self, weather: WeatherSeries, t_supply0: float) -> None:
        self.state = self.building.steady_state(
            t_supply0, float(weather.t_out[0]), m_dot=self.m_dot)
        self.last_t_air_full = self.state.t_air.copy()

    def step(self, t_supply: float, weather: WeatherSeries, t: int):
        cmd = SubstationCommand(t_supply, self.m_dot)
        self.state = self.building.step(self.state, cmd, weather.record(t))
        self.last_t_air_full = self.state.t_air.copy()
        t_occ = self.state.t_air[self.building.occupied]
        return t_occ, float(self.state.t_return)


@dataclass
class Trajectory:
    """Hourly record of one simulated season under a policy."""

    hour_index: np.ndarray
    t_supply: np.ndarray
    m_dot: float
    t_out: np.ndarray
    ghi: np.ndarray
    t_return: np.ndarray
    t_air: np.ndarray                       # (H, n_columns)
    reward: Optional[np.ndarray] = None     # NaN during warm-up
    action_index: Optional[np.ndarray] = None
    baseline_ts: Optional[np.ndarray] = None

    def save_csv(self, path) -> None:
        n_cols = self.t_air.shape[1]
        header = ["hour", "t_supply", "m_dot", "t_out", "ghi", "t_return"]
        header += [f"t_air_{j}" for j in range(n_cols)]
        extra = []
        if self.reward is not None:
            extra = ["reward", "action_index", "baseline_ts"]
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(header + extra)
            for t in range(len(self.hour_index)):
                row = [int(self.hour_index[t]), f"{self.t_supply[t]:.4f}",
                       f"{self.m_dot:.4f}", f"{self.t_out[t]:.4f}",
                       f"{self.ghi[t]:.4f}", f"{self.t_return[t]:.4f}"]
                row += [f"{v:.4f}" for v in self.t_air[t]]
                if extra:
                    row += [f"{self.reward[t]:.6f}",
                            int(self.action_index[t]),
                            f"{self.baseline_ts[t]:.4f}"]
                w.writerow(row)


class EpisodeRunner:
    """Drives one season step by step; usable both for policy evaluation and
    for online agent training."""

    def __init__(self, env, weather: WeatherSeries, schedule: TargetSchedule,
                 baseline_curve, action_kind: str = INCREMENT,
                 warmup_steps: int = WARMUP_STEPS):
        if len(weather) < warmup_steps + 1:
            raise MdpError("weather series shorter than the warm-up period")
        self.env = env
        self.weather = weather
        self.schedule = schedule
        self.baseline_curve = baseline_curve
        self.action_kind = action_kind
        self.warmup_steps = warmup_steps
        self.n_decision_steps = len(weather) - warmup_steps
        n_out = env.n_outputs
        self.window = ObservationWindow(n_out)
        self.t = 0
        self.prev_t_supply: float = 0.0
        H = len(weather)
        self._traj_ts = np.full(H, np.nan)
        self._traj_tr = np.full(H, np.nan)
        self._traj_air = np.full((H, n_out), np.nan)
        self._traj_air_full: Optional[List[np.ndarray]] = []
        self._traj_reward = np.full(H, np.nan)
        self._traj_action = np.full(H, -1, dtype=np.int64)
        self._traj_baseline = np.full(H, np.nan)
        self._warm_up()

    def _baseline_ts(self, t: int) -> float:
        return float(self.baseline_curve.eval(float(self.weather.t_out[t])))

    def _record(self, t, ts, t_occ, t_return):
        self._traj_ts[t] = ts
        self._traj_tr[t] = t_return
        self._traj_air[t] = t_occ
        full = getattr(self.env, "last_t_air_full", None)
        self._traj_air_full.append(
            np.array(full) if full is not None else np.array(t_occ))

    def _advance(self, ts: float) -> float:
        """Apply one supply temperature for the current hour; returns reward."""
        t = self.t
        t_occ, t_return = self.env.step(ts, self.weather, t)
        hod = int(self.weather.hour_of_day[t])
        targets = self.schedule.target_vector(hod, len(t_occ))
        r = reward(t_occ, targets)
        self.window.push(float(self.weather.t_out[t]), ts, hod, t_occ)
        self._record(t, ts, t_occ, t_return)
        self.prev_t_supply = ts
        self.t = t + 1
        return r

    def _warm_up(self):
        ts0 = self._baseline_ts(0)
        self.env.reset(self.weather, ts0)
        self.prev_t_supply = ts0
        for _ in range(self.warmup_steps):
            self._advance(self._baseline_ts(self.t))

    @property
    def done(self) -> bool:
        return self.t >= len(self.weather)

    def observation(self) -> np.ndarray:
        return self.window.flatten()

    def step(self, action_index: int):
        """Apply one agent action; returns (reward, next_observation, done)."""
        if self.done:
            raise MdpError("episode already finished")
        t = self.t
        base = self._baseline_ts(t)
        ts = apply_action(self.action_kind, self.prev_t_supply, base,
                          action_index)
        r = self._advance(ts)
        self._traj_reward[t] = r
        self._traj_action[t] = action_index
        self._traj_baseline[t] = base
        return r, self.window.flatten(), self.done

    def trajectory(self) -> Trajectory:
        t_air_full = np.array(self._traj_air_full)
        if t_air_full.shape[0] < len(self.weather):
            pad = np.full((len(self.weather) - t_air_full.shape[0],
                           t_air_full.shape[1] if t_air_full.size else
                           self.env.n_outputs), np.nan)
            t_air_full = np.vstack([t_air_full, pad]) if t_air_full.size else pad
        return Trajectory(
            hour_index=self.weather.hour_index.copy(),
            t_supply=self._traj_ts, m_dot=getattr(self.env, "m_dot", 5.0),
            t_out=self.weather.t_out.copy(), ghi=self.weather.ghi.copy(),
            t_return=self._traj_tr, t_air=t_air_full,
            reward=self._traj_reward, action_index=self._traj_action,
            baseline_ts=self._traj_baseline)


def run_episode(env, policy: Policy, weather: WeatherSeries,
                schedule: TargetSchedule, baseline_curve,
                action_kind: str = INCREMENT):
    """Run a full season under a fixed policy.

    Returns (transitions, trajectory): the warm-up hours produce no
    transitions, the remaining hours produce one each.
    """
    runner = EpisodeRunner(env, weather, schedule, baseline_curve, action_kind)
    transitions: List[Transition] = []
    obs = runner.observation()
    while not runner.done:
        a = int(policy(obs))
        r, next_obs, done = runner.step(a)
        transitions.append(Transition(obs, a, r, next_obs, done))
        obs = next_obs
    return transitions, runner.trajectory()


def constant_policy(action_index: int) -> Policy:
    return lambda obs: action_index
