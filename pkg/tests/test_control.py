import numpy as np
import pytest

from dhlab.control import (PidGains, PsoConfig, WaterCurve, fit_water_curve,
                           pid_step, pso_minimize, run_pid_season,
                           seasonal_comfort_cost, tune_pid, water_curve_eval)
from dhlab.mdp import TargetSchedule, WARMUP_STEPS
from dhlab.thermal import NOMINAL, single_apartment_building
from dhlab.weather import CITY_STATS, ClimateStats, synthesize_weather


def analytic_optimal_supply(t_out, target=18.0):
    """Supply temperature holding one nominal apartment exactly at the
    target in steady state (series resistance mass->air->envelope)."""
    r = 1.0 / NOMINAL["h_mass_air"] + 1.0 / NOMINAL["ua_water_mass"]
    return target + NOMINAL["ua_env"] * r * (target - t_out)


class TestWaterCurve:
    def test_eval_and_clamp(self):
        c = WaterCurve(38.0, -0.5)
        assert water_curve_eval(c, 0.0) == 38.0
        assert water_curve_eval(c, 10.0) == 33.0
        assert water_curve_eval(c, -40.0) == 50.0   # upper clamp
        assert water_curve_eval(c, 100.0) == 20.0   # lower clamp

    def test_vector_eval(self):
        c = WaterCurve(38.0, -0.5)
        assert np.allclose(c.eval([0.0, 10.0]), [38.0, 33.0])

    def test_round_trip(self, tmp_path):
        c = WaterCurve(37.25, -0.875)
        path = tmp_path / "curve.json"
        c.save(path)
        loaded = WaterCurve.load(path)
        assert loaded == c


class TestPso:
    def test_sphere(self):
        target = np.array([1.2, -0.7, 0.4])
        cfg = PsoConfig(bounds=[(-5.0, 5.0)] * 3, iterations=120, seed=0)
        res = pso_minimize(lambda x: float(np.sum((x - target) ** 2)), cfg)
        assert res.value < 1e-3
        assert np.allclose(res.x, target, atol=0.05)

    def test_vectorized_matches_scalar(self):
        target = np.array([0.5, 2.0])
        cfg = PsoConfig(bounds=[(-4.0, 4.0)] * 2, iterations=40, seed=3)
        res_s = pso_minimize(lambda x: float(np.sum((x - target) ** 2)), cfg)
        res_v = pso_minimize(
            lambda X: np.sum((X - target) ** 2, axis=1), cfg, vectorized=True)
        assert np.array_equal(res_s.x, res_v.x)
        assert res_s.value == res_v.value

    def test_history_monotone(self):
        cfg = PsoConfig(bounds=[(-3.0, 3.0)] * 2, iterations=50, seed=1)
        res = pso_minimize(lambda x: float(np.sum(x ** 2)), cfg)
        assert np.all(np.diff(res.best_history) <= 0)

    def test_non_finite_treated_as_inf(self):
        def obj(x):
            return np.nan if x[0] > 0 else float(x[0] ** 2)
        cfg = PsoConfig(bounds=[(-2.0, 2.0)], iterations=30, seed=0)
        res = pso_minimize(obj, cfg)
        assert np.isfinite(res.value)
        assert res.x[0] <= 0

    def test_determinism(self):
        cfg = PsoConfig(bounds=[(-1.0, 1.0)] * 2, iterations=20, seed=9)
        f = lambda x: float(np.sum(x ** 2))
        assert pso_minimize(f, cfg).value == pso_minimize(f, cfg).value

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PsoConfig(swarm_size=1)
        with pytest.raises(ValueError):
            PsoConfig(bounds=[(2.0, 1.0)])
        with pytest.raises(ValueError):
            pso_minimize(lambda x: 0.0, PsoConfig())


class TestComfortCost:
    def test_matches_manual_sum(self):
        b = single_apartment_building()
        w = synthesize_weather(CITY_STATS["Yuncheng"], 200, seed=2)
        ts = np.full(200, 38.0)
        schedule = TargetSchedule()
        cost = seasonal_comfort_cost(b, w, schedule, ts)
        t_air, _ = b.simulate_season(w, ts)
        manual = np.abs(t_air[WARMUP_STEPS:, 0] - 18.0).sum()
        assert cost == pytest.approx(manual)

    def test_batched_shape(self):
        b = single_apartment_building()
        w = synthesize_weather(CITY_STATS["Yuncheng"], 150, seed=2)
        ts = np.stack([np.full(150, 35.0), np.full(150, 40.0)])
        cost = seasonal_comfort_cost(b, w, TargetSchedule(), ts)
        assert cost.shape == (2,)


class TestFitWaterCurve:
    def test_constant_weather_hits_analytic_optimum(self):
        b = single_apartment_building()
        stats = ClimateStats(2.53, 0.0, 0.0, 0.0)
        w = synthesize_weather(stats, 300, seed=0)
        pso = PsoConfig(bounds=[(20.0, 60.0), (-3.0, 0.0)], iterations=25,
                        seed=0)
        curve, result = fit_water_curve(b, [w], TargetSchedule(), pso)
        assert abs(float(curve.eval(2.53))
                   - analytic_optimal_supply(2.53)) < 0.5
        assert np.isfinite(result.value)

    def test_rejects_empty_training_set(self):
        with pytest.raises(ValueError):
            fit_water_curve(single_apartment_building(), [], TargetSchedule())


class TestPid:
    def test_no_derivative_kick_at_startup(self):
        g = PidGains(kp=1.0, ki=0.0, kd=10.0)
        out1, state = pid_step(g, 17.0, None, feedforward=30.0)
        assert out1 == pytest.approx(30.0 + 1.0)   # derivative term absent

    def test_derivative_on_measurement(self):
        g = PidGains(kp=0.0, ki=0.0, kd=2.0)
        _, state = pid_step(g, 17.0, None, feedforward=30.0)
        out, _ = pid_step(g, 17.5, state, feedforward=30.0)
        assert out == pytest.approx(30.0 - 2.0 * 0.5)

    def test_anti_windup_clamp(self):
        g = PidGains(kp=0.0, ki=1.0, kd=0.0, integral_limit=5.0)
        state = None
        for _ in range(50):
            out, state = pid_step(g, 10.0, state, feedforward=30.0)
        assert state[0] == 5.0
        assert out == pytest.approx(35.0)

    def test_output_clamped_to_band(self):
        g = PidGains(kp=100.0, ki=0.0, kd=0.0)
        out, _ = pid_step(g, 0.0, None, feedforward=30.0)
        assert out == 50.0
        out, _ = pid_step(g, 40.0, None, feedforward=30.0)
        assert out == 20.0

    def test_gains_validation_and_round_trip(self, tmp_path):
        with pytest.raises(ValueError):
            PidGains(kp=-1.0)
        g = PidGains(kp=2.0, ki=0.3, kd=1.0, setpoint=19.0)
        path = tmp_path / "gains.json"
        g.save(path)
        assert PidGains.load(path) == g

    def test_settles_on_setpoint_steady_conditions(self):
        b = single_apartment_building()
        w = synthesize_weather(ClimateStats(2.53, 0.0, 0.0, 0.0), 400, seed=4)
        curve = WaterCurve(30.0, -0.3)   # deliberately imperfect feedforward
        gains = PidGains(kp=4.0, ki=0.5, kd=0.0)
        _, air, _ = run_pid_season(b, w, TargetSchedule(), gains, curve)
        # integral action removes the feedforward bias entirely
        assert abs(air[200:, 0].mean() - 18.0) < 0.1

    def test_tracks_under_varying_weather(self):
        b = single_apartment_building()
        w = synthesize_weather(CITY_STATS["Yuncheng"], 400, seed=4)
        curve = WaterCurve(30.0, -0.3)
        gains = PidGains(kp=4.0, ki=0.5, kd=0.0)
        _, air, _ = run_pid_season(b, w, TargetSchedule(), gains, curve)
        assert abs(air[WARMUP_STEPS:, 0].mean() - 18.0) < 0.3

    def test_tune_pid_beats_pure_feedforward(self):
        b = single_apartment_building()
        w = synthesize_weather(CITY_STATS["Yuncheng"], 250, seed=5)
        curve = WaterCurve(30.0, -0.3)
        schedule = TargetSchedule()
        gains, cost = tune_pid(b, w, schedule, curve,
                               kp_grid=(0.0, 4.0), ki_grid=(0.0, 0.5),
                               kd_grid=(0.0,))
        _, air, _ = run_pid_season(b, w, schedule, PidGains(kp=0, ki=0, kd=0),
                                   curve)
        ff_cost = float(np.abs(air[WARMUP_STEPS:, 0] - 18.0).sum())
        assert cost <= ff_cost
        assert gains.kp > 0 or gains.ki > 0
