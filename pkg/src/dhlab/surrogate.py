"""
System identification of the building: generate seasons from the RC
simulator under randomized supply-temperature commands, then train a
stacked LSTM regressor that maps a 120-hour input window (hour-of-day
encoding, weather, facade fluxes, commands) to the occupied indoor
temperatures and the loop return temperature.

The trained model is the fast training environment for the control
agents; prediction of one window is an order of magnitude cheaper than
sub-stepped RC simulation of the same horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .lstm import LstmRegressor, mae_loss_and_grad
from .optim import Adam, clip_grad_norm
from .thermal import (Building, BuildingState, SubstationCommand,
                      _orient_flux_arrays, default_building)
from .weather import (CITY_STATS, SEASON_HOURS, TRAINING_CITIES, WeatherSeries,
                      synthesize_weather)

INPUT_WINDOW = 120
N_INPUTS = 9   # sin h, cos h, t_out, ghi, flux E/S/W, t_supply, m_dot


class SurrogateError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainingSeries:
    """One simulated season: hourly input features and model targets
    (occupied indoor temperatures followed by the return temperature)."""

    city: str
    inputs: np.ndarray    # (H, N_INPUTS)
    targets: np.ndarray   # (H, n_targets)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise SurrogateError("inputs and targets must have equal length")
        if len(self.inputs) < INPUT_WINDOW:
            raise SurrogateError(f"series shorter than {INPUT_WINDOW} hours")
        if not (np.all(np.isfinite(self.inputs))
                and np.all(np.isfinite(self.targets))):
            raise SurrogateError("non-finite values in training series")


@dataclass
class Dataset:
    series: List[TrainingSeries]
    train_idx: List[int]
    val_idx: List[int]
    test_idx: List[int]

    def split(self, name: str) -> List[TrainingSeries]:
        idx = {"train": self.train_idx, "val": self.val_idx,
               "test": self.test_idx}[name]
        return [self.series[i] for i in idx]


@dataclass
class FitReport:
    train_mae: float
    val_mae: float
    test_mae: float
    test_std: float
    epochs_run: int


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    batch: int = 32
    bptt_window: int = INPUT_WINDOW
    windows_per_series: int = 8
    burn_in: int = 24        # window steps excluded from the loss
    eval_stride: int = 16
    seed: int = 0


def season_input_features(weather: WeatherSeries, m_dot: float = 5.0
                          ) -> np.ndarray:
    """Hourly input features for a season, with the supply-temperature
    column zeroed (to be filled by the caller)."""
    H = len(weather)
    flux3 = _orient_flux_arrays(weather.day_of_year, weather.hour_of_day,
                                weather.ghi)
    ang = 2.0 * np.pi * weather.hour_of_day / 24.0
    X = np.empty((H, N_INPUTS))
    X[:, 0] = np.sin(ang)
    X[:, 1] = np.cos(ang)
    X[:, 2] = weather.t_out
    X[:, 3] = weather.ghi
    X[:, 4:7] = flux3.T
    X[:, 7] = 0.0
    X[:, 8] = m_dot
    return X


def random_walk_commands(rng, n_series: int, n_hours: int,
                         step_std: float = 1.5) -> np.ndarray:
    """Bounded random-walk supply temperatures in [20, 50], shape (S, H)."""
    ts = np.empty((n_series, n_hours))
    ts[:, 0] = rng.uniform(25.0, 45.0, size=n_series)
    steps = rng.normal(0.0, step_std, size=(n_series, n_hours - 1))
    for t in range(1, n_hours):
        ts[:, t] = np.clip(ts[:, t - 1] + steps[:, t - 1], 20.0, 50.0)
    return ts


def generate_dataset(n_series: int, seed: int = 0,
                     building: Optional[Building] = None,
                     season_len: int = SEASON_HOURS,
                     cities: Sequence[str] = tuple(TRAINING_CITIES),
                     m_dot: float = 5.0) -> Dataset:
    """Simulate ``n_series`` seasons under random commands and random
    training-city weather; deterministic in ``seed``.  All series are
    integrated in one batched pass through the simulator."""
    if n_series < 10:
        raise SurrogateError("n_series must be >= 10")
    if building is None:
        building = default_building(0)
    rng = np.random.default_rng(seed)
    city_pick = [cities[i] for i in rng.integers(0, len(cities), n_series)]
    weather = [synthesize_weather(CITY_STATS[c], season_len,
                                  int(rng.integers(0, 2 ** 31)), city=c)
               for c in city_pick]
    ts = random_walk_commands(rng, n_series, season_len)

    # batched integration: state (S, n_apartments)
    t_out = np.stack([w.t_out for w in weather])              # (S, H)
    solar = np.empty((n_series, season_len, building.n_apartments))
    feats = np.empty((n_series, season_len, N_INPUTS))
    for s, w in enumerate(weather):
        X = season_input_features(w, m_dot)
        X[:, 7] = ts[s]
        feats[s] = X
        solar[s] = (X[:, 4:7][:, building.orientation_idx]
                    * building.solar_aperture[None, :])
    init_air = np.empty((n_series, building.n_apartments))
    init_mass = np.empty_like(init_air)
    for s in range(n_series):
        st = building.steady_state(float(ts[s, 0]), float(t_out[s, 0]),
                                   m_dot=m_dot)
        init_air[s] = st.t_air
        init_mass[s] = st.t_mass
    state = BuildingState(init_air, init_mass, np.zeros(n_series))
    occ = building.occupied
    targets = np.empty((n_series, season_len, building.n_occupied + 1))
    for t in range(season_len):
        cmd = SubstationCommand(ts[:, t], m_dot)
        state = building._step_precomputed(state, cmd, t_out[:, t],
                                           solar[:, t, :])
        targets[:, t, :-1] = state.t_air[:, occ]
        targets[:, t, -1] = state.t_return

    series = [TrainingSeries(city_pick[s], feats[s], targets[s])
              for s in range(n_series)]
    n_val = max(1, int(round(0.1 * n_series)))
    n_train = n_series - 2 * n_val
    idx = list(range(n_series))
    return Dataset(series, idx[:n_train], idx[n_train:n_train + n_val],
                   idx[n_train + n_val:])


# ---------------------------------------------------------------------------
# Model wrapper with normalization
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


class SurrogateModel:
    """LSTM regressor plus z-score normalization of inputs and targets."""

    def __init__(self, core: LstmRegressor, x_mean, x_std, y_mean, y_std):
        self.core = core
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean = np.asarray(y_mean, dtype=float)
        self.y_std = np.asarray(y_std, dtype=float)
        if np.any(self.x_std <= 0) or np.any(self.y_std <= 0):
            raise SurrogateError("normalization stds must be > 0")

    @property
    def n_targets(self) -> int:
        return self.core.n_out

    def normalize_x(self, X):
        return (X - self.x_mean) / self.x_std

    def denormalize_y(self, Y):
        return Y * self.y_std + self.y_mean

    def predict(self, window: np.ndarray) -> Tuple[np.ndarray, float]:
        """Predict from one 120-hour raw-unit input window.  Returns the
        occupied indoor temperatures and the return temperature (°C)."""
        window = np.asarray(window, dtype=float)
        if window.shape != (INPUT_WINDOW, N_INPUTS):
            raise SurrogateError(
                f"window must have shape ({INPUT_WINDOW}, {N_INPUTS}), "
                f"got {window.shape}")
        if not np.all(np.isfinite(window)):
            raise SurrogateError("non-finite values in window")
        Xn = self.normalize_x(window)[None]
        y = self.core.forward(Xn)[0, -1]
        y = self.denormalize_y(y)
        return y[:-1], float(y[-1])

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        Xn = self.normalize_x(windows)
        return self.denormalize_y(self.core.forward(Xn)[:, -1, :])

    # streaming inference (equivalent to growing-window prediction)
    def init_state(self):
        return self.core.init_state(1)

    def step(self, x_raw: np.ndarray, state):
        y, state = self.core.step(self.normalize_x(x_raw), state)
        return self.denormalize_y(np.asarray(y).ravel()), state

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        np.savez(path, version=CHECKPOINT_VERSION, n_in=self.core.n_in,
                 n_out=self.core.n_out, hidden=np.array(self.core.hidden),
                 x_mean=self.x_mean, x_std=self.x_std,
                 y_mean=self.y_mean, y_std=self.y_std,
                 **{f"param_{k}": v for k, v in self.core.params.items()})

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        d = np.load(path)
        if int(d["version"]) != CHECKPOINT_VERSION:
            raise SurrogateError(f"unsupported checkpoint version {d['version']}")
        core = LstmRegressor(int(d["n_in"]), int(d["n_out"]),
                             tuple(int(h) for h in d["hidden"]))
        for k in list(core.params):
            core.params[k] = d[f"param_{k}"]
        return cls(core, d["x_mean"], d["x_std"], d["y_mean"], d["y_std"])


def evaluate(model: SurrogateModel, series: Sequence[TrainingSeries],
             stride: int = 16) -> Tuple[float, float, np.ndarray]:
    """Final-step prediction errors over sliding windows.  Returns
    (MAE, std of absolute error, per-sample absolute errors in °C)."""
    windows, targets = [], []
    for s in series:
        H = len(s.inputs)
        for start in range(0, H - INPUT_WINDOW + 1, stride):
            windows.append(s.inputs[start:start + INPUT_WINDOW])
            targets.append(s.targets[start + INPUT_WINDOW - 1])
    X = np.array(windows)
    Y = np.array(targets)
    errs = np.abs(model.predict_batch(X) - Y).ravel()
    return float(errs.mean()), float(errs.std()), errs


def train(dataset: Dataset, config: Optional[TrainConfig] = None
          ) -> Tuple[SurrogateModel, FitReport]:
    """Train the surrogate with Adam on MAE over 120-step windows,
    keeping the parameters with the best validation MAE."""
    if config is None:
        config = TrainConfig()
    train_series = dataset.split("train")
    if not train_series:
        raise SurrogateError("empty training split")
    n_out = train_series[0].targets.shape[1]

    X_all = np.concatenate([s.inputs for s in train_series])
    Y_all = np.concatenate([s.targets for s in train_series])
    x_mean, x_std = X_all.mean(axis=0), X_all.std(axis=0)
    y_mean, y_std = Y_all.mean(axis=0), Y_all.std(axis=0)
    x_std = np.where(x_std > 1e-8, x_std, 1.0)
    y_std = np.where(y_std > 1e-8, y_std, 1.0)

    core = LstmRegressor(N_INPUTS, n_out, (32, 32), seed=config.seed)
    model = SurrogateModel(core, x_mean, x_std, y_mean, y_std)
    opt = Adam(lr=config.lr)
    rng = np.random.default_rng(config.seed)
    T = config.bptt_window

    val_series = dataset.split("val") or train_series
    best_val = np.inf
    best_params = {k: v.copy() for k, v in core.params.items()}
    final_val = np.inf
    mask = np.zeros(T)
    mask[config.burn_in:] = 1.0

    for epoch in range(config.epochs):
        # sample fresh windows each epoch
        starts = []
        for si, s in enumerate(train_series):
            hi = len(s.inputs) - T
            for st in rng.integers(0, hi + 1, size=config.windows_per_series):
                starts.append((si, int(st)))
        rng.shuffle(starts)
        losses = []
        for b0 in range(0, len(starts), config.batch):
            chunk = starts[b0:b0 + config.batch]
            Xb = np.array([train_series[si].inputs[st:st + T]
                           for si, st in chunk])
            Yb = np.array([train_series[si].targets[st:st + T]
                           for si, st in chunk])
            Xn = model.normalize_x(Xb)
            Yn = (Yb - y_mean) / y_std
            out, cache = core.forward(Xn, return_cache=True)
            loss, dY = mae_loss_and_grad(out, Yn,
                                         np.broadcast_to(mask, out.shape[:2]))
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            grads = core.backward(Xn, cache, dY)
            clip_grad_norm(grads, 10.0)
            opt.step(core.params, grads)
            losses.append(loss)
        val_mae, _, _ = evaluate(model, val_series, config.eval_stride)
        final_val = val_mae
        if val_mae < best_val:
            best_val = val_mae
            best_params = {k: v.copy() for k, v in core.params.items()}

    core.params = best_params
    train_mae, _, _ = evaluate(model, train_series, config.eval_stride * 4)
    val_mae, _, _ = evaluate(model, val_series, config.eval_stride)
    test_series = dataset.split("test") or val_series
    test_mae, test_std, _ = evaluate(model, test_series, config.eval_stride)
    report = FitReport(train_mae, val_mae, test_mae, test_std, config.epochs)
    return model, report


# ---------------------------------------------------------------------------
# Episode environment backed by the surrogate
# ---------------------------------------------------------------------------

class SurrogateEnv:
    """MDP environment whose plant is the trained recurrent model.

    The model runs statefully hour by hour, which is equivalent to
    predicting from a growing input window with zero initial state; after
    the 119-hour warm-up the effective window is the full 120 steps.
    """

    def __init__(self, model: SurrogateModel, m_dot: float = 5.0):
        self.model = model
        self.m_dot = m_dot
        self._state = None
        self._features: Optional[np.ndarray] = None
        self.last_t_air_full: Optional[np.ndarray] = None

    @property
    def n_outputs(self) -> int:
        return self.model.n_targets - 1

    def reset(self, weather: WeatherSeries, t_supply0: float) -> None:
        self._features = season_input_features(weather, self.m_dot)
        self._state = self.model.init_state()
        # prime one step so t_air history exists before the first hour
        x0 = self._features[0].copy()
        x0[7] = t_supply0
        y, _ = self.model.step(x0, self.model.init_state())
        self.last_t_air_full = y[:-1]

    def step(self, t_supply: float, weather: WeatherSeries, t: int):
        x = self._features[t].copy()
        x[7] = t_supply
        y, self._state = self.model.step(x, self._state)
        self.last_t_air_full = y[:-1]
        return y[:-1], float(y[-1])
