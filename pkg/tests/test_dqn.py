import numpy as np
import pytest

from dhlab.control import WaterCurve
from dhlab.dqn import (DqnConfig, QNetwork, ReplayBuffer, TrainingLogRow,
                       epsilon_at, greedy_policy, obs_normalizer,
                       save_training_log, td_update, train_agent)
from dhlab.mdp import GroundTruthEnv, INCREMENT, N_ACTIONS, TargetSchedule
from dhlab.optim import Adam
from dhlab.thermal import single_apartment_building
from dhlab.weather import CITY_STATS, synthesize_weather


class TestEpsilon:
    def test_linear_anneal(self):
        cfg = DqnConfig(eps_start=1.0, eps_end=0.1, eps_fraction=0.8)
        assert epsilon_at(0, 1000, cfg) == 1.0
        assert epsilon_at(400, 1000, cfg) == pytest.approx(0.55)
        assert epsilon_at(800, 1000, cfg) == pytest.approx(0.1)
        assert epsilon_at(1000, 1000, cfg) == pytest.approx(0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            DqnConfig(eps_start=0.1, eps_end=0.5)
        with pytest.raises(ValueError):
            DqnConfig(eps_fraction=0.0)
        with pytest.raises(ValueError):
            epsilon_at(0, 0, DqnConfig())


class TestNormalizer:
    def test_temperature_channels(self):
        offset, scale = obs_normalizer(1)
        assert offset.shape == scale.shape == (120,)
        frame_off = offset[:5]
        frame_sc = scale[:5]
        assert np.array_equal(frame_off, [18.0, 18.0, 0.0, 0.0, 18.0])
        assert np.array_equal(frame_sc, [10.0, 10.0, 1.0, 1.0, 10.0])
        # an 18 degrees everywhere window maps to zero temperatures
        obs = np.tile([18.0, 18.0, 0.5, -0.5, 18.0], 24)
        normed = (obs - offset) / scale
        assert np.allclose(normed, np.tile([0, 0, 0.5, -0.5, 0], 24))


class TestQNetwork:
    def test_forward_shape(self):
        net = QNetwork(120)
        q = net.forward(np.zeros(120))
        assert q.shape == (1, N_ACTIONS)
        q = net.forward(np.zeros((7, 120)))
        assert q.shape == (7, N_ACTIONS)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients_match_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        net = QNetwork(10, hidden=8, seed=seed)
        x = rng.normal(size=(4, 10))
        actions = rng.integers(0, N_ACTIONS, size=4)
        y = rng.normal(size=4)

        def loss_fn():
            q = net.forward(x)
            return 0.5 * float(np.sum((q[np.arange(4), actions] - y) ** 2))

        q, cache = net.forward(x, return_cache=True)
        dq = np.zeros_like(q)
        dq[np.arange(4), actions] = q[np.arange(4), actions] - y
        grads = net.backward(cache, dq)
        h = 1e-5
        for name in sorted(net.params):
            flat_p = net.params[name].ravel()
            flat_g = grads[name].ravel()
            for c in rng.choice(flat_p.size, size=min(5, flat_p.size),
                                replace=False):
                orig = flat_p[c]
                flat_p[c] = orig + h
                hi = loss_fn()
                flat_p[c] = orig - h
                lo = loss_fn()
                flat_p[c] = orig
                num = (hi - lo) / (2 * h)
                denom = max(abs(num), abs(flat_g[c]), 1e-8)
                assert abs(flat_g[c] - num) / denom < 1e-4

    def test_target_copy_is_deep(self):
        net = QNetwork(10, hidden=8, seed=0)
        target = QNetwork(10, hidden=8, seed=1)
        target.copy_weights_from(net)
        net.params["W0"][0, 0] += 1.0
        assert target.params["W0"][0, 0] != net.params["W0"][0, 0]

    def test_save_load_round_trip(self, tmp_path):
        net = QNetwork(15, hidden=8, seed=3)
        path = tmp_path / "net.npz"
        net.save(path)
        loaded = QNetwork.load(path)
        x = np.random.default_rng(0).normal(size=(3, 15))
        assert np.array_equal(net.forward(x), loaded.forward(x))


class TestReplayBuffer:
    def test_overwrites_oldest(self):
        buf = ReplayBuffer(3, 1)
        for i in range(5):
            buf.push([float(i)], i % N_ACTIONS, float(i), [float(i)], False)
        assert buf.size == 3
        # entries 0 and 1 evicted; 3, 4, 2 occupy slots 0, 1, 2
        assert sorted(buf.obs[:, 0].tolist()) == [2.0, 3.0, 4.0]
        assert buf.obs[buf.cursor - 1, 0] == 4.0

    def test_sampling_uniformity(self):
        buf = ReplayBuffer(50, 1)
        for i in range(50):
            buf.push([float(i)], 0, 0.0, [0.0], False)
        rng = np.random.default_rng(123)
        draws = 100_000
        obs, *_ = buf.sample(rng, draws)
        counts = np.bincount(obs[:, 0].astype(int), minlength=50)
        expect = draws / 50
        sigma = np.sqrt(draws * (1 / 50) * (1 - 1 / 50))
        assert np.all(np.abs(counts - expect) < 3 * sigma)

    def test_sample_before_full(self):
        buf = ReplayBuffer(100, 2)
        for i in range(4):
            buf.push([i, i], 0, 0.0, [0, 0], False)
        obs, *_ = buf.sample(np.random.default_rng(0), 16)
        assert obs[:, 0].max() <= 3

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0, 1)


class TestTdUpdate:
    def test_loss_decreases_on_fixed_batch(self):
        rng = np.random.default_rng(0)
        net = QNetwork(10, hidden=16, seed=0)
        target = QNetwork(10, hidden=16, seed=0)
        target.copy_weights_from(net)
        cfg = DqnConfig()
        opt = Adam(lr=1e-3)
        batch = (rng.normal(size=(32, 10)),
                 rng.integers(0, N_ACTIONS, 32),
                 rng.normal(size=32),
                 rng.normal(size=(32, 10)),
                 np.zeros(32, dtype=bool))
        losses = [td_update(net, target, batch, cfg, opt) for _ in range(60)]
        assert losses[-1] < losses[0]

    def test_done_masks_bootstrap(self):
        net = QNetwork(4, hidden=8, seed=0)
        target = QNetwork(4, hidden=8, seed=0)
        target.copy_weights_from(net)
        obs = np.zeros((1, 4))
        # terminal transition: the regression target is exactly the reward
        q_before = net.forward(obs)[0, 2]
        batch = (obs, np.array([2]), np.array([-5.0]), obs,
                 np.array([True]))
        loss = td_update(net, target, batch, DqnConfig(), Adam())
        assert loss == pytest.approx((q_before - (-5.0)) ** 2)


class TestTraining:
    def test_greedy_policy_deterministic(self):
        net = QNetwork(120, seed=0)
        policy = greedy_policy(net, 1)
        obs = np.tile([0.0, 40.0, 0.0, 1.0, 20.0], 24)
        assert policy(obs) == policy(obs)
        assert 0 <= policy(obs) < N_ACTIONS

    def test_train_agent_smoke(self):
        env = GroundTruthEnv(single_apartment_building())
        pool = [synthesize_weather(CITY_STATS[c], 140, seed=i)
                for i, c in enumerate(["Beijing", "Harbin"])]
        cfg = DqnConfig(episodes=3, seed=0, target_update_every=10)
        net, rewards, log = train_agent(INCREMENT, env, WaterCurve(38, -0.5),
                                        pool, cfg, TargetSchedule())
        assert len(rewards) == 3
        assert len(log) == 3
        assert all(np.isfinite(r) for r in rewards)

    def test_train_agent_deterministic(self):
        def run():
            env = GroundTruthEnv(single_apartment_building())
            pool = [synthesize_weather(CITY_STATS["Beijing"], 135, seed=0)]
            cfg = DqnConfig(episodes=2, seed=5)
            net, rewards, _ = train_agent(INCREMENT, env,
                                          WaterCurve(38, -0.5), pool, cfg,
                                          TargetSchedule())
            return rewards, net.params["W2"].copy()
        (ra, wa), (rb, wb) = run(), run()
        assert ra == rb
        assert np.array_equal(wa, wb)

    def test_training_log_csv(self, tmp_path):
        rows = [TrainingLogRow(0, -10.5, 1.0, 0.25),
                TrainingLogRow(1, -8.0, 0.9, 0.20)]
        path = tmp_path / "log.csv"
        save_training_log(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "episode,total_reward,epsilon,loss_mean"
        assert lines[1].startswith("0,-10.5")
