"""
Classical baselines: the linear water curve (supply temperature as an
affine function of outdoor temperature, tuned with particle swarm
optimization against the seasonal comfort cost) and a PID controller on
the mean indoor temperature with the water curve as feedforward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .mdp import TargetSchedule, WARMUP_STEPS
from .thermal import Building, SubstationCommand, T_SUPPLY_MAX, T_SUPPLY_MIN
from .weather import WeatherSeries


@dataclass
class WaterCurve:
    """Linear water curve: t_supply = alpha + beta * t_out, clamped."""

    alpha: float
    beta: float

    def eval(self, t_out):
        return np.clip(self.alpha + self.beta * np.asarray(t_out, dtype=float),
                       T_SUPPLY_MIN, T_SUPPLY_MAX)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"alpha": self.alpha, "beta": self.beta}, f)

    @classmethod
    def load(cls, path) -> "WaterCurve":
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        return cls(float(d["alpha"]), float(d["beta"]))


def water_curve_eval(curve: WaterCurve, t_out: float) -> float:
    return float(curve.eval(t_out))


# ---------------------------------------------------------------------------
# Particle swarm optimization
# ---------------------------------------------------------------------------

@dataclass
class PsoConfig:
    """Global-best PSO with the canonical constriction-factor constants."""

    swarm_size: int = 30
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    iterations: int = 100
    bounds: List[Tuple[float, float]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"bad bound ({lo}, {hi})")


@dataclass
class PsoResult:
    x: np.ndarray
    value: float
    best_history: np.ndarray   # best-so-far value after each iteration


def pso_minimize(objective: Callable, config: PsoConfig,
                 vectorized: bool = False) -> PsoResult:
    """Minimize an objective over the bounded box in ``config.bounds``.

    With ``vectorized=True`` the objective receives the whole swarm as an
    (swarm_size, dim) array and must return (swarm_size,) values; this is
    how season-simulation objectives amortize their cost.  Non-finite
    objective values are treated as +inf.  Deterministic in config.seed.
    """
    if not config.bounds:
        raise ValueError("config.bounds must be non-empty")
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    d = len(config.bounds)
    P = config.swarm_size
    x = lo + (hi - lo) * rng.random((P, d))
    v = (hi - lo) * (rng.random((P, d)) - 0.5)

    def evaluate(pos):
        if vectorized:
            vals = np.asarray(objective(pos), dtype=float)
        else:
            vals = np.array([float(objective(p)) for p in pos])
        return np.where(np.isfinite(vals), vals, np.inf)

    f = evaluate(x)
    pbest_x, pbest_f = x.copy(), f.copy()
    g = int(np.argmin(f))
    gbest_x, gbest_f = x[g].copy(), float(f[g])
    history = np.empty(config.iterations)
    for it in range(config.iterations):
        r1 = rng.random((P, d))
        r2 = rng.random((P, d))
        v = (config.inertia * v
             + config.c1 * r1 * (pbest_x - x)
             + config.c2 * r2 * (gbest_x - x))
        x = np.clip(x + v, lo, hi)
        f = evaluate(x)
        improved = f < pbest_f
        pbest_x[improved] = x[improved]
        pbest_f[improved] = f[improved]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest_f = float(pbest_f[g])
            gbest_x = pbest_x[g].copy()
        history[it] = gbest_f
    return PsoResult(gbest_x, gbest_f, history)


# ---------------------------------------------------------------------------
# Water-curve fitting
# ---------------------------------------------------------------------------

def seasonal_comfort_cost(building: Building, weather: WeatherSeries,
                          schedule: TargetSchedule,
                          t_supply_per_hour) -> np.ndarray:
    """Sum over evaluation hours and occupied apartments of the absolute
    target deviation.  Accepts a batch of schedules, shape (B, H)."""
    t_air, _ = building.simulate_season(weather, t_supply_per_hour)
    occ = building.occupied
    targets = np.array([schedule.target_at(int(h))
                        for h in weather.hour_of_day])
    dev = np.abs(t_air[..., occ] - targets[:, None])
    return dev[..., WARMUP_STEPS:, :].sum(axis=(-1, -2))


def fit_water_curve(building: Building, training_weather: Sequence[WeatherSeries],
                    schedule: TargetSchedule, pso: Optional[PsoConfig] = None
                    ) -> Tuple[WaterCurve, PsoResult]:
    """Fit (alpha, beta) by minimizing the mean seasonal comfort cost over
    the given weather series with PSO.  Deterministic in pso.seed."""
    if not training_weather:
        raise ValueError("training_weather must be non-empty")
    if pso is None:
        pso = PsoConfig(bounds=[(20.0, 60.0), (-3.0, 0.0)])
    if not pso.bounds:
        pso = PsoConfig(swarm_size=pso.swarm_size, inertia=pso.inertia,
                        c1=pso.c1, c2=pso.c2, iterations=pso.iterations,
                        bounds=[(20.0, 60.0), (-3.0, 0.0)], seed=pso.seed)

    def objective(X):
        # X: (P, 2) -> mean comfort cost across the training seasons
        total = np.zeros(len(X))
        for w in training_weather:
            ts = np.clip(X[:, 0:1] + X[:, 1:2] * w.t_out[None, :],
                         T_SUPPLY_MIN, T_SUPPLY_MAX)
            total += seasonal_comfort_cost(building, w, schedule, ts)
        return total / len(training_weather)

    result = pso_minimize(objective, pso, vectorized=True)
    return WaterCurve(float(result.x[0]), float(result.x[1])), result


# ---------------------------------------------------------------------------
# PID
# ---------------------------------------------------------------------------

@dataclass
class PidGains:
    kp: float = 4.0
    ki: float = 0.5
    kd: float = 0.0
    integral_limit: float = 20.0
    setpoint: float = 18.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be >= 0")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.__dict__, f)

    @classmethod
    def load(cls, path) -> "PidGains":
        with open(path, encoding="utf-8") as f:
            return cls(**json.load(f))


def pid_step(gains: PidGains, mean_t_air: float, state, dt: float = 1.0,
             feedforward: float = 35.0):
    """One PID update on the mean indoor temperature.

    ``state`` is (integral, previous measurement) or None at start-up.
    Derivative acts on the measurement (no setpoint kick); the integral is
    clamped at ±integral_limit for anti-windup.  Returns (t_supply, state').
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    integral, prev_meas = state if state is not None else (0.0, None)
    e = gains.setpoint - mean_t_air
    integral = float(np.clip(integral + e * dt,
                             -gains.integral_limit, gains.integral_limit))
    deriv = 0.0 if prev_meas is None else -(mean_t_air - prev_meas) / dt
    out = feedforward + gains.kp * e + gains.ki * integral + gains.kd * deriv
    out = float(np.clip(out, T_SUPPLY_MIN, T_SUPPLY_MAX))
    return out, (integral, mean_t_air)


def run_pid_season(building: Building, weather: WeatherSeries,
                   schedule: TargetSchedule, gains: PidGains,
                   feedforward_curve: WaterCurve, m_dot: float = 5.0):
    """Closed-loop season: the PID trims the water-curve feedforward using
    the mean occupied indoor temperature measured the previous hour.

    Returns (t_supply, t_air, t_return) arrays over the full season.
    """
    H = len(weather)
    occ = building.occupied
    ts0 = float(feedforward_curve.eval(weather.t_out[0]))
    state = building.steady_state(ts0, float(weather.t_out[0]), m_dot=m_dot)
    pid_state = None
    ts_hist = np.empty(H)
    air_hist = np.empty((H, building.n_apartments))
    ret_hist = np.empty(H)
    for t in range(H):
        ff = float(feedforward_curve.eval(weather.t_out[t]))
        mean_air = float(state.t_air[occ].mean())
        ts, pid_state = pid_step(gains, mean_air, pid_state, 1.0, ff)
        state = building.step(state, SubstationCommand(ts, m_dot),
                              weather.record(t))
        ts_hist[t] = ts
        air_hist[t] = state.t_air
        ret_hist[t] = float(state.t_return)
    return ts_hist, air_hist, ret_hist


def tune_pid(building: Building, weather: WeatherSeries,
             schedule: TargetSchedule, feedforward_curve: WaterCurve,
             kp_grid=(0.0, 1.0, 2.0, 4.0, 8.0),
             ki_grid=(0.0, 0.1, 0.3, 0.6),
             kd_grid=(0.0, 2.0, 8.0)) -> Tuple[PidGains, float]:
    """Coarse grid search minimizing the seasonal comfort cost on one
    training season."""
    setpoint = schedule.day_value
    occ = building.occupied
    targets = np.array([schedule.target_at(int(h)) for h in weather.hour_of_day])
    best, best_cost = None, math.inf
    for kp in kp_grid:
        for ki in ki_grid:
            for kd in kd_grid:
                gains = PidGains(kp=kp, ki=ki, kd=kd, setpoint=setpoint)
                _, air, _ = run_pid_season(building, weather, schedule, gains,
                                           feedforward_curve)
                cost = float(np.abs(air[WARMUP_STEPS:, occ]
                                    - targets[WARMUP_STEPS:, None]).sum())
                if cost < best_cost:
                    best, best_cost = gains, cost
    return best, best_cost
