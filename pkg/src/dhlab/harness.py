"""
Experiment orchestration and reporting: comfort / energy / CO₂ metrics,
side-by-side policy comparisons on the test-city season, and emission of
plot data (CSV + self-contained SVG).

The comparison pipeline fits the water-curve baseline with PSO, tunes the
PID, trains the requested DQN agents, then evaluates every policy against
the ground-truth simulator with a common building seed and target
schedule.  Energy gains are measured relative to the fitted water curve.
"""

from __future__ import annotations

import dataclasses
import json
import os
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import control, dqn, mdp, surrogate, thermal, weather
from .control import PidGains, PsoConfig, WaterCurve
from .dqn import DqnConfig, TrainingLogRow
from .mdp import (BASELINE_DELTA, INCREMENT, TargetSchedule, Trajectory,
                  WARMUP_STEPS, GroundTruthEnv, run_episode)
from .svg import SvgPlot
from .thermal import Building, CP_WATER
from .weather import CITY_STATS, SEASON_HOURS, TRAINING_CITIES, WeatherSeries

CO2_G_PER_KWH_ELEC = 930.0
CHP_SLOPE = abs((350.0 - 234.0) / (0.0 - 382.0))   # ΔMW elec per MW heat
HEAT_KWH_PER_M2 = 80.0


class HarnessError(ValueError):
    pass


@dataclass
class PolicyReport:
    policy_name: str
    mae_t_in: float
    std_t_in: float
    seasonal_energy_kwh: float
    energy_gain_pct: float
    co2_saved_g_m2: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def comfort_metrics(trajectory: Trajectory, schedule: TargetSchedule,
                    occupied: Optional[np.ndarray] = None,
                    start: int = WARMUP_STEPS) -> Tuple[float, float]:
    """MAE of indoor temperatures against the target, and the pooled
    standard deviation of the indoor temperatures, over the evaluation
    hours."""
    t_air = trajectory.t_air[start:]
    if t_air.size == 0:
        raise HarnessError("empty trajectory")
    if occupied is not None and t_air.shape[1] == len(occupied):
        t_air = t_air[:, np.asarray(occupied, dtype=bool)]
    hod = trajectory.hour_index[start:] % 24
    targets = np.array([schedule.target_at(int(h)) for h in hod])
    mae = float(np.abs(t_air - targets[:, None]).mean())
    std = float(t_air.std())
    return mae, std


def seasonal_energy(trajectory: Trajectory, start: int = 0) -> float:
    """Season heat energy in kWh: Σ ṁ·c_p·(T_s − T_r) over one-hour steps."""
    ts = trajectory.t_supply[start:]
    tr = trajectory.t_return[start:]
    power_w = trajectory.m_dot * CP_WATER * (ts - tr)
    return float(np.nansum(power_w) * 3600.0 / 3.6e6)


def co2_saved(p: float) -> float:
    """CO₂ saved (g/m² per season) for an energy-gain fraction p."""
    if not p < 1.0:
        raise HarnessError("energy-gain fraction must be < 1")
    return CO2_G_PER_KWH_ELEC * CHP_SLOPE * HEAT_KWH_PER_M2 * p


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int = 0
    building: str = "single"           # "single" | "full"
    building_seed: int = 0
    model: str = "ground-truth"        # agent training plant
    policies: List[str] = field(default_factory=lambda: [
        "baseline", "pid", "agent1", "agent2"])
    test_city: str = "Yuncheng"
    training_cities: List[str] = field(
        default_factory=lambda: list(TRAINING_CITIES))
    fit_cities: int = 3                # cities used for the water-curve fit
    season_len: int = SEASON_HOURS
    schedule: TargetSchedule = field(default_factory=TargetSchedule)
    pso: PsoConfig = field(default_factory=lambda: PsoConfig(
        iterations=40, bounds=[(20.0, 60.0), (-3.0, 0.0)]))
    dqn: DqnConfig = field(default_factory=lambda: DqnConfig(episodes=60))
    surrogate_series: int = 100
    surrogate_epochs: int = 30
    surrogate_return_temp: bool = False  # meter energy with predicted T_r
    out_dir: str = "out"

    def __post_init__(self):
        if self.test_city in self.training_cities:
            raise HarnessError(
                f"test city {self.test_city!r} must not appear in the "
                "training cities")
        if self.building not in ("single", "full"):
            raise HarnessError(f"unknown building kind {self.building!r}")
        if self.model not in ("ground-truth", "surrogate"):
            raise HarnessError(f"unknown model choice {self.model!r}")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        if str(path).endswith(".toml"):
            import tomllib
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        else:
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if "schedule" in raw:
            raw["schedule"] = TargetSchedule(**raw["schedule"])
        if "pso" in raw:
            p = dict(raw["pso"])
            if "bounds" in p:
                p["bounds"] = [tuple(b) for b in p["bounds"]]
            else:
                p["bounds"] = [(20.0, 60.0), (-3.0, 0.0)]
            raw["pso"] = PsoConfig(**p)
        if "dqn" in raw:
            raw["dqn"] = DqnConfig(**raw["dqn"])
        return cls(**raw)

    def make_building(self) -> Building:
        if self.building == "single":
            return thermal.single_apartment_building(self.building_seed)
        return thermal.default_building(self.building_seed)


def _spawn_seed(base: int, label: str) -> int:
    # stable per-purpose sub-seed from the single experiment seed
    return int(np.random.SeedSequence([base, zlib.crc32(label.encode())])
               .generate_state(1)[0])


def synthesize_city_pool(config: ExperimentConfig) -> Dict[str, WeatherSeries]:
    pool = {}
    for city in config.training_cities + [config.test_city]:
        pool[city] = weather.synthesize_weather(
            CITY_STATS[city], config.season_len,
            _spawn_seed(config.seed, f"weather-{city}"), city=city)
    return pool


# ---------------------------------------------------------------------------
# Policy evaluation on the ground-truth plant
# ---------------------------------------------------------------------------

def evaluate_water_curve(building: Building, w: WeatherSeries,
                         curve: WaterCurve, m_dot: float = 5.0) -> Trajectory:
    ts = np.asarray(curve.eval(w.t_out))
    t_air, t_ret = building.simulate_season(w, ts, m_dot=m_dot)
    return Trajectory(w.hour_index.copy(), ts, m_dot, w.t_out.copy(),
                      w.ghi.copy(), t_ret, t_air)


def evaluate_pid(building: Building, w: WeatherSeries, gains: PidGains,
                 curve: WaterCurve, schedule: TargetSchedule,
                 m_dot: float = 5.0) -> Trajectory:
    ts, t_air, t_ret = control.run_pid_season(building, w, schedule, gains,
                                              curve, m_dot)
    return Trajectory(w.hour_index.copy(), ts, m_dot, w.t_out.copy(),
                      w.ghi.copy(), t_ret, t_air)


def evaluate_agent(building: Building, w: WeatherSeries, net, kind: str,
                   curve: WaterCurve, schedule: TargetSchedule,
                   m_dot: float = 5.0) -> Trajectory:
    env = GroundTruthEnv(building, m_dot)
    policy = dqn.greedy_policy(net, building.n_occupied)
    _, traj = run_episode(env, policy, w, schedule, curve, kind)
    return traj


# ---------------------------------------------------------------------------
# Comparison pipeline
# ---------------------------------------------------------------------------

def run_comparison(config: ExperimentConfig):
    """Fit / train every requested policy, evaluate all of them on the
    test-city season against the ground truth, and write reports,
    trajectories and plot data to ``config.out_dir``.

    Returns (reports, artifacts); individual policy failures are recorded
    in ``artifacts["errors"]`` without aborting the others.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    building = config.make_building()
    pool = synthesize_city_pool(config)
    test_weather = pool[config.test_city]
    schedule = config.schedule

    artifacts: Dict[str, object] = {"errors": {}, "trajectories": {},
                                    "training_logs": {}}

    # baseline water curve is always needed (reference for energy gains)
    fit_weather = [pool[c] for c in config.training_cities[:config.fit_cities]]
    curve, pso_result = control.fit_water_curve(building, fit_weather,
                                                schedule, config.pso)
    curve.save(os.path.join(config.out_dir, "water_curve.json"))

    # agent training plant
    train_pool = [pool[c] for c in config.training_cities]
    if any(p in config.policies for p in ("agent1", "agent2")):
        if config.model == "surrogate":
            dataset = surrogate.generate_dataset(
                config.surrogate_series,
                _spawn_seed(config.seed, "dataset"), building=building,
                season_len=config.season_len,
                cities=tuple(config.training_cities))
            sur_model, fit_report = surrogate.train(
                dataset, surrogate.TrainConfig(
                    epochs=config.surrogate_epochs,
                    seed=_spawn_seed(config.seed, "surrogate")))
            sur_model.save(os.path.join(config.out_dir, "surrogate.npz"))
            artifacts["surrogate_report"] = fit_report
            train_env = surrogate.SurrogateEnv(sur_model)
        else:
            train_env = GroundTruthEnv(building)

    trained: Dict[str, object] = {}
    kind_of = {"agent1": INCREMENT, "agent2": BASELINE_DELTA}
    for name in config.policies:
        if name not in kind_of:
            continue
        try:
            cfg = dataclasses.replace(
                config.dqn, seed=_spawn_seed(config.seed, f"dqn-{name}"))
            net, rewards, log = dqn.train_agent(
                kind_of[name], train_env, curve, train_pool, cfg, schedule)
            trained[name] = net
            artifacts["training_logs"][name] = log
            net.save(os.path.join(config.out_dir, f"{name}_qnet.npz"))
            dqn.save_training_log(
                log, os.path.join(config.out_dir, f"{name}_training_log.csv"))
        except Exception as e:  # noqa: BLE001 - per-policy isolation
            artifacts["errors"][name] = repr(e)

    gains: Optional[PidGains] = None
    if "pid" in config.policies:
        try:
            gains, _ = control.tune_pid(building, train_pool[0], schedule,
                                        curve)
            gains.save(os.path.join(config.out_dir, "pid_gains.json"))
        except Exception as e:  # noqa: BLE001
            artifacts["errors"]["pid"] = repr(e)

    # evaluation on the ground truth, common seed and schedule
    trajectories: Dict[str, Trajectory] = {}
    for name in config.policies:
        try:
            if name == "baseline":
                trajectories[name] = evaluate_water_curve(building,
                                                          test_weather, curve)
            elif name == "pid":
                if gains is None:
                    continue
                trajectories[name] = evaluate_pid(building, test_weather,
                                                  gains, curve, schedule)
            elif name in kind_of:
                if name not in trained:
                    continue
                trajectories[name] = evaluate_agent(
                    building, test_weather, trained[name], kind_of[name],
                    curve, schedule)
            else:
                raise HarnessError(f"unknown policy {name!r}")
        except Exception as e:  # noqa: BLE001
            artifacts["errors"][name] = repr(e)
    artifacts["trajectories"] = trajectories

    base_energy = None
    if "baseline" in trajectories:
        base_energy = seasonal_energy(trajectories["baseline"], WARMUP_STEPS)
    reports: List[PolicyReport] = []
    for name in config.policies:
        if name not in trajectories:
            continue
        traj = trajectories[name]
        mae, std = comfort_metrics(traj, schedule, building.occupied)
        energy = seasonal_energy(traj, WARMUP_STEPS)
        if base_energy:
            p = (base_energy - energy) / base_energy
        else:
            p = 0.0
        reports.append(PolicyReport(name, mae, std, energy, 100.0 * p,
                                    co2_saved(p)))
        traj.save_csv(os.path.join(config.out_dir, f"trajectory_{name}.csv"))

    save_reports(reports, config.out_dir)
    emit_plots(trajectories, reports, config.out_dir,
               artifacts["training_logs"])
    return reports, artifacts


def save_reports(reports: Sequence[PolicyReport], out_dir) -> None:
    with open(os.path.join(out_dir, "reports.json"), "w",
              encoding="utf-8") as f:
        json.dump([r.to_dict() for r in reports], f, indent=2, sort_keys=True)
    lines = [f"{'policy':<12}{'MAE Tin':>10}{'std Tin':>10}"
             f"{'energy kWh':>14}{'gain %':>9}{'CO2 g/m2':>10}"]
    for r in reports:
        lines.append(f"{r.policy_name:<12}{r.mae_t_in:>10.3f}"
                     f"{r.std_t_in:>10.3f}{r.seasonal_energy_kwh:>14.1f}"
                     f"{r.energy_gain_pct:>9.2f}{r.co2_saved_g_m2:>10.1f}")
    with open(os.path.join(out_dir, "reports.txt"), "w",
              encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Plot emission
# ---------------------------------------------------------------------------

def emit_plots(trajectories: Dict[str, Trajectory],
               reports: Sequence[PolicyReport], out_dir,
               training_logs: Optional[Dict[str, List[TrainingLogRow]]] = None
               ) -> List[str]:
    """Write Ts-vs-To scatter data, indoor-temperature time series and
    training-reward curves, each as CSV plus an SVG rendering.  Returns
    the list of warnings (e.g. nothing to plot)."""
    warnings: List[str] = []
    if not trajectories:
        warnings.append("no trajectories; no plot files emitted")
        return warnings
    os.makedirs(out_dir, exist_ok=True)

    scatter = SvgPlot("Supply temperature vs outdoor temperature",
                      "T_out (°C)", "T_supply (°C)")
    for name, traj in trajectories.items():
        sel = slice(WARMUP_STEPS, None)
        with open(os.path.join(out_dir, f"ts_vs_to_{name}.csv"), "w",
                  encoding="utf-8") as f:
            f.write("t_out,t_supply\n")
            for a, b in zip(traj.t_out[sel], traj.t_supply[sel]):
                f.write(f"{a:.4f},{b:.4f}\n")
        scatter.scatter(traj.t_out[sel], traj.t_supply[sel], name)
    scatter.save(os.path.join(out_dir, "ts_vs_to.svg"))

    for name, traj in trajectories.items():
        plot = SvgPlot(f"Indoor temperatures — {name}", "hour", "T_in (°C)")
        with open(os.path.join(out_dir, f"tin_{name}.csv"), "w",
                  encoding="utf-8") as f:
            cols = ",".join(f"t_air_{j}" for j in range(traj.t_air.shape[1]))
            f.write(f"hour,{cols}\n")
            for t in range(traj.t_air.shape[0]):
                vals = ",".join(f"{v:.4f}" for v in traj.t_air[t])
                f.write(f"{int(traj.hour_index[t])},{vals}\n")
        for j in range(traj.t_air.shape[1]):
            plot.line(traj.hour_index, traj.t_air[:, j])
        plot.save(os.path.join(out_dir, f"tin_{name}.svg"))

    if training_logs:
        plot = SvgPlot("Training rewards", "episode", "total reward")
        with open(os.path.join(out_dir, "training_rewards.csv"), "w",
                  encoding="utf-8") as f:
            f.write("agent,episode,total_reward\n")
            for name, log in training_logs.items():
                for row in log:
                    f.write(f"{name},{row.episode},{row.total_reward:.4f}\n")
                plot.line([r.episode for r in log],
                          [r.total_reward for r in log], name)
        plot.save(os.path.join(out_dir, "training_rewards.svg"))
    return warnings
