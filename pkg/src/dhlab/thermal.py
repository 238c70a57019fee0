"""
Ground-truth building simulator: a substation-fed six-story building with
three apartments per floor (East / South / West), radiant floor heating
modelled as a 2R2C network per apartment with party-wall coupling.

Each apartment has an air node (air + furniture) and a mass node (radiant
floor).  Occupied apartments receive heat from the loop water through the
floor; empty apartments have the loop shut off and act as thermal losses.
The loop return temperature closes the substation energy balance:

    q_w_j   = ua_water_mass · (t_supply − t_mass_j)   clamped at >= 0
    C_m Ṫ_m = q_w − h_mass_air · (T_m − T_air)
    C_a Ṫ_a = h_mass_air · (T_m − T_air) − ua_env · (T_air − T_out)
              + aperture · φ_orient + Σ_nb ua_party · (T_air,nb − T_air)
    T_r     = T_s − Σ_j q_w_j / (ṁ · c_p)

Integration is explicit Euler with 60 sub-steps per hour.  All state math
is vectorised and supports a leading batch dimension, so many command
candidates (e.g. a PSO swarm) can be simulated in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .weather import WeatherRecord, WeatherSeries, solar_declination_deg

CP_WATER = 4180.0          # J/(kg·K)
SUBSTEPS_PER_HOUR = 60
T_SUPPLY_MIN = 20.0
T_SUPPLY_MAX = 50.0
MAX_SUBSTEP_DELTA = 5.0    # °C; larger per-sub-step jumps indicate instability

ORIENTATIONS = ("East", "South", "West")

N_FLOORS = 6
N_PER_FLOOR = 3
N_APARTMENTS = N_FLOORS * N_PER_FLOOR

#: Fixed empty-apartment pattern (7 of 18), including the bottom and top
#: corner units.  Apartment id = floor * 3 + column (E=0, S=1, W=2).
EMPTY_APARTMENTS = (0, 2, 5, 9, 12, 15, 17)

# Nominal 2R2C parameters; per-building values are jittered ±20% around these.
NOMINAL = dict(
    c_air=1.0e7,        # J/K
    c_mass=1.0e7,       # J/K
    ua_env=240.0,       # W/K
    h_mass_air=600.0,   # W/K
    ua_water_mass=350.0,  # W/K
    ua_party=200.0,     # W/K per party wall
    solar_aperture=1.5,  # m²
)


class StabilityError(RuntimeError):
    """Sub-step temperature change exceeded the stability bound."""


class ThermalError(ValueError):
    """Invalid state, command or building definition."""


@dataclass
class ApartmentParams:
    """2R2C parameters for one apartment."""

    c_air: float
    c_mass: float
    ua_env: float
    h_mass_air: float
    ua_water_mass: float
    solar_aperture: float
    orientation: str
    occupied: bool
    neighbor_ids: List[int] = field(default_factory=list)
    ua_party: float = NOMINAL["ua_party"]

    def __post_init__(self):
        for name in ("c_air", "c_mass", "ua_env", "h_mass_air",
                     "ua_water_mass", "ua_party"):
            if getattr(self, name) <= 0:
                raise ThermalError(f"{name} must be > 0")
        if self.orientation not in ORIENTATIONS:
            raise ThermalError(f"unknown orientation {self.orientation!r}")


@dataclass
class SubstationCommand:
    """Secondary-side command: supply water temperature and flow rate."""

    t_supply: float   # °C, scalar or array for batched simulation
    m_dot: float = 5.0  # kg/s

    def __post_init__(self):
        ts = np.asarray(self.t_supply)
        if np.any(ts < T_SUPPLY_MIN) or np.any(ts > T_SUPPLY_MAX):
            raise ThermalError(
                f"t_supply must lie in [{T_SUPPLY_MIN}, {T_SUPPLY_MAX}]")
        if np.any(np.asarray(self.m_dot) <= 0):
            raise ThermalError("m_dot must be > 0")


class BuildingState:
    """Air and mass temperatures per apartment plus loop return temperature.

    Arrays may carry a leading batch dimension: shape (..., n_apartments).
    """

    def __init__(self, t_air, t_mass, t_return=0.0):
        self.t_air = np.asarray(t_air, dtype=np.float64)
        self.t_mass = np.asarray(t_mass, dtype=np.float64)
        self.t_return = np.asarray(t_return, dtype=np.float64)
        if not (np.all(np.isfinite(self.t_air)) and np.all(np.isfinite(self.t_mass))):
            raise ThermalError("non-finite temperatures in building state")
        if np.any(self.t_air < -30.0) or np.any(self.t_air > 45.0):
            raise ThermalError("t_air outside the [-30, 45] °C sanity band")

    def copy(self) -> "BuildingState":
        return BuildingState(self.t_air.copy(), self.t_mass.copy(),
                             np.array(self.t_return, copy=True))


def orient_flux(record: WeatherRecord, orientation: str) -> float:
    """Incident solar flux (W/m²) on a vertical facade of given orientation."""
    return float(_orient_flux_arrays(
        np.array([record.day_of_year]), np.array([record.hour_of_day]),
        np.array([record.ghi]))[ORIENTATIONS.index(orientation)][0])


def _orient_flux_arrays(day_of_year, hour_of_day, ghi):
    """Per-orientation facade fluxes, shape (3, n). East peaks in the
    morning, South near solar noon, West in the afternoon; bounded by
    1.2 × GHI and exactly zero whenever GHI is zero."""
    decl = np.radians(solar_declination_deg(day_of_year))
    lat = np.radians(35.0)
    h_ang = np.radians(15.0 * (np.asarray(hour_of_day, dtype=float) - 12.0))
    sin_el = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(h_ang)
    cos_el = np.sqrt(np.clip(1.0 - sin_el ** 2, 0.0, 1.0))
    # azimuth measured from North, clockwise
    az = np.arctan2(np.sin(h_ang),
                    np.cos(h_ang) * np.sin(lat) - np.tan(decl) * np.cos(lat)) + np.pi
    out = np.zeros((3, len(np.atleast_1d(ghi))))
    facade_az = {"East": np.pi / 2, "South": np.pi, "West": 3 * np.pi / 2}
    sun_up = (sin_el > 0) & (np.asarray(ghi) > 0)
    denom = np.maximum(sin_el, 0.25)
    for k, ori in enumerate(ORIENTATIONS):
        cos_inc = cos_el * np.cos(az - facade_az[ori])
        ratio = np.clip(cos_inc / denom, 0.0, 1.2)
        out[k] = np.where(sun_up, np.asarray(ghi) * ratio, 0.0)
    return out


def heat_duty(cmd: SubstationCommand, t_return) -> float:
    """Heat transferred through the exchanger: ṁ · c_p · (T_s − T_r), in W."""
    return cmd.m_dot * CP_WATER * (np.asarray(cmd.t_supply) - np.asarray(t_return))


def default_building(seed: int = 0, n_apartments: int = N_APARTMENTS) -> "Building":
    """Standard 18-apartment building (11 occupied) with parameters jittered
    ±20% around the nominal values, deterministically from the seed."""
    rng = np.random.default_rng(seed)
    apartments = []
    for j in range(n_apartments):
        floor, col = divmod(j, N_PER_FLOOR)
        jit = lambda v: float(v * (1.0 + rng.uniform(-0.2, 0.2)))
        neighbors = []
        if floor > 0:
            neighbors.append(j - N_PER_FLOOR)
        if floor < N_FLOORS - 1 and j + N_PER_FLOOR < n_apartments:
            neighbors.append(j + N_PER_FLOOR)
        if col > 0:
            neighbors.append(j - 1)
        if col < N_PER_FLOOR - 1 and j + 1 < n_apartments:
            neighbors.append(j + 1)
        apartments.append(ApartmentParams(
            c_air=jit(NOMINAL["c_air"]),
            c_mass=jit(NOMINAL["c_mass"]),
            ua_env=jit(NOMINAL["ua_env"]),
            h_mass_air=jit(NOMINAL["h_mass_air"]),
            ua_water_mass=jit(NOMINAL["ua_water_mass"]),
            solar_aperture=jit(NOMINAL["solar_aperture"]),
            orientation=ORIENTATIONS[col],
            occupied=j not in EMPTY_APARTMENTS,
            neighbor_ids=neighbors,
        ))
    return Building(apartments)


def single_apartment_building(seed: int = 0) -> "Building":
    """One occupied South-facing apartment with nominal parameters; used for
    the single-apartment control experiments."""
    apt = ApartmentParams(
        c_air=NOMINAL["c_air"], c_mass=NOMINAL["c_mass"],
        ua_env=NOMINAL["ua_env"], h_mass_air=NOMINAL["h_mass_air"],
        ua_water_mass=NOMINAL["ua_water_mass"],
        solar_aperture=NOMINAL["solar_aperture"],
        orientation="South", occupied=True, neighbor_ids=[])
    return Building([apt])


class Building:
    """Vectorised 2R2C building model with party-wall coupling."""

    def __init__(self, apartments: Sequence[ApartmentParams]):
        self.apartments = list(apartments)
        n = len(self.apartments)
        self.n_apartments = n
        self.c_air = np.array([a.c_air for a in self.apartments])
        self.c_mass = np.array([a.c_mass for a in self.apartments])
        self.ua_env = np.array([a.ua_env for a in self.apartments])
        self.h_mass_air = np.array([a.h_mass_air for a in self.apartments])
        self.ua_water_mass = np.array([a.ua_water_mass for a in self.apartments])
        self.solar_aperture = np.array([a.solar_aperture for a in self.apartments])
        self.occupied = np.array([a.occupied for a in self.apartments])
        self.orientation_idx = np.array(
            [ORIENTATIONS.index(a.orientation) for a in self.apartments])
        # symmetric party-wall conductance matrix
        W = np.zeros((n, n))
        for j, a in enumerate(self.apartments):
            for k in a.neighbor_ids:
                if k < 0 or k >= n:
                    raise ThermalError(f"apartment {j}: bad neighbor id {k}")
                W[j, k] = a.ua_party
        if not np.allclose(W, W.T):
            raise ThermalError("party-wall adjacency is not symmetric")
        self.wall_ua = W
        self.wall_deg = W.sum(axis=1)

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    @property
    def occupied_ids(self) -> np.ndarray:
        return np.flatnonzero(self.occupied)

    # -- state construction --------------------------------------------------

    def uniform_state(self, t: float, batch: Optional[int] = None) -> BuildingState:
        shape = (self.n_apartments,) if batch is None else (batch, self.n_apartments)
        return BuildingState(np.full(shape, float(t)), np.full(shape, float(t)))

    def steady_state(self, t_supply, t_out, ghi: float = 0.0,
                     day_of_year: int = 349, hour_of_day: int = 12,
                     m_dot: float = 5.0) -> BuildingState:
        """Fixed point of the dynamics under constant inputs, from a direct
        linear solve (q_w clamp resolved by iterating on the active set)."""
        flux3 = _orient_flux_arrays(np.array([day_of_year]),
                                    np.array([hour_of_day]), np.array([ghi]))
        solar = self.solar_aperture * flux3[self.orientation_idx, 0]
        n = self.n_apartments
        heating = self.occupied.copy()
        for _ in range(n + 1):
            A = np.zeros((2 * n, 2 * n))
            b = np.zeros(2 * n)
            uw = np.where(heating, self.ua_water_mass, 0.0)
            for j in range(n):
                # mass node: uw*(Ts - Tm) - h*(Tm - Ta) = 0
                A[j, j] = -(uw[j] + self.h_mass_air[j])
                A[j, n + j] = self.h_mass_air[j]
                b[j] = -uw[j] * t_supply
                # air node: h*(Tm - Ta) - ua_env*(Ta - To) + solar + walls = 0
                A[n + j, j] = self.h_mass_air[j]
                A[n + j, n + j] = -(self.h_mass_air[j] + self.ua_env[j]
                                    + self.wall_deg[j])
                A[n + j, n:] += self.wall_ua[j]
                b[n + j] = -self.ua_env[j] * t_out - solar[j]
            x = np.linalg.solve(A, b)
            t_mass, t_air = x[:n], x[n:]
            active = self.occupied & (t_supply > t_mass)
            if np.array_equal(active, heating):
                break
            heating = active
        q_w = np.where(heating, self.ua_water_mass * (t_supply - t_mass), 0.0)
        t_return = t_supply - q_w.sum() / (m_dot * CP_WATER)
        return BuildingState(t_air, t_mass, t_return)

    # -- dynamics ------------------------------------------------------------

    def step(self, state: BuildingState, cmd: SubstationCommand,
             record: WeatherRecord, dt: float = 3600.0,
             return_diag: bool = False):
        """Advance one hour (explicit Euler, 60 sub-steps).

        ``cmd.t_supply`` may be an array of shape matching the batch
        dimension of ``state`` to advance many scenarios at once.
        Returns the new state (and, optionally, a per-step energy
        accounting dict).
        """
        flux3 = _orient_flux_arrays(np.array([record.day_of_year]),
                                    np.array([record.hour_of_day]),
                                    np.array([record.ghi]))
        solar = self.solar_aperture * flux3[self.orientation_idx, 0]
        return self._step_precomputed(state, cmd, record.t_out, solar, dt,
                                      return_diag)

    def _step_precomputed(self, state, cmd, t_out, solar, dt=3600.0,
                          return_diag=False):
        n_sub = max(1, round(dt / 3600.0 * SUBSTEPS_PER_HOUR))
        h = dt / n_sub
        t_air = state.t_air.copy()
        t_mass = state.t_mass.copy()
        ts = np.asarray(cmd.t_supply, dtype=np.float64)
        if ts.ndim and t_air.ndim > 1:
            ts = ts[..., None]
        t_out = np.asarray(t_out, dtype=np.float64)
        if t_out.ndim and t_air.ndim > 1:
            t_out = t_out[..., None]
        occ = self.occupied
        uw = np.where(occ, self.ua_water_mass, 0.0)
        qw_sum = 0.0
        e_water = e_solar = e_env = 0.0
        for _ in range(n_sub):
            q_w = np.maximum(uw * (ts - t_mass), 0.0)
            d_air_flow = (self.h_mass_air * (t_mass - t_air)
                          - self.ua_env * (t_air - t_out)
                          + solar
                          + t_air @ self.wall_ua.T - self.wall_deg * t_air)
            d_mass_flow = q_w - self.h_mass_air * (t_mass - t_air)
            da = h * d_air_flow / self.c_air
            dm = h * d_mass_flow / self.c_mass
            if max(np.abs(da).max(), np.abs(dm).max()) > MAX_SUBSTEP_DELTA:
                raise StabilityError(
                    "per-sub-step temperature change exceeds "
                    f"{MAX_SUBSTEP_DELTA} °C; reduce the step size")
            qw_sum = qw_sum + q_w.sum(axis=-1)
            if return_diag:
                e_water += h * q_w.sum(axis=-1)
                e_solar += h * np.broadcast_to(solar, t_air.shape).sum(axis=-1)
                e_env += h * (self.ua_env * (t_air - t_out)).sum(axis=-1)
            t_air = t_air + da
            t_mass = t_mass + dm
        t_return = np.squeeze(ts, axis=-1) if ts.ndim > 1 else ts
        t_return = t_return - (qw_sum / n_sub) / (cmd.m_dot * CP_WATER)
        new = BuildingState(t_air, t_mass, t_return)
        if return_diag:
            diag = {
                "energy_water_j": e_water,
                "energy_solar_j": e_solar,
                "energy_envelope_j": e_env,
                "stored_j": ((self.c_air * (t_air - state.t_air)).sum(axis=-1)
                             + (self.c_mass * (t_mass - state.t_mass)).sum(axis=-1)),
            }
            return new, diag
        return new

    def simulate_season(self, weather: WeatherSeries, t_supply_per_hour,
                        m_dot: float = 5.0,
                        initial: Optional[BuildingState] = None
                        ) -> Tuple[np.ndarray, np.ndarray]:
        """Run a whole season under a prescribed supply-temperature schedule.

        ``t_supply_per_hour`` has shape (H,) or (B, H) for batched runs.
        Returns (t_air, t_return) with shapes (..., H, n_apartments) and
        (..., H).  Starts from the steady state under the first command
        unless ``initial`` is given.
        """
        ts = np.asarray(t_supply_per_hour, dtype=np.float64)
        batched = ts.ndim == 2
        H = ts.shape[-1]
        if H != len(weather):
            raise ThermalError("schedule length must match weather length")
        flux3 = _orient_flux_arrays(weather.day_of_year, weather.hour_of_day,
                                    weather.ghi)
        solar_all = self.solar_aperture[None, :] * flux3[self.orientation_idx,
                                                         :].T  # (H, n)
        if initial is None:
            if batched:
                B = ts.shape[0]
                air = np.empty((B, self.n_apartments))
                mass = np.empty((B, self.n_apartments))
                ret = np.empty(B)
                for i in range(B):
                    s0 = self.steady_state(float(ts[i, 0]),
                                           float(weather.t_out[0]),
                                           m_dot=m_dot)
                    air[i], mass[i], ret[i] = s0.t_air, s0.t_mass, s0.t_return
                st = BuildingState(air, mass, ret)
            else:
                st = self.steady_state(float(ts[0]), float(weather.t_out[0]),
                                       m_dot=m_dot)
        else:
            st = initial.copy()
        out_air = np.empty(ts.shape[:-1] + (H, self.n_apartments))
        out_ret = np.empty(ts.shape[:-1] + (H,))
        for t in range(H):
            cmd = SubstationCommand(ts[..., t], m_dot)
            st = self._step_precomputed(st, cmd, weather.t_out[t], solar_all[t])
            out_air[..., t, :] = st.t_air
            out_ret[..., t] = st.t_return
        return out_air, out_ret

    # -- serialization -------------------------------------------------------

    def to_config(self) -> dict:
        return {"apartments": [
            {"c_air": a.c_air, "c_mass": a.c_mass, "ua_env": a.ua_env,
             "h_mass_air": a.h_mass_air, "ua_water_mass": a.ua_water_mass,
             "solar_aperture": a.solar_aperture, "orientation": a.orientation,
             "occupied": a.occupied, "neighbor_ids": list(a.neighbor_ids),
             "ua_party": a.ua_party}
            for a in self.apartments]}

    @classmethod
    def from_config(cls, cfg: dict) -> "Building":
        return cls([ApartmentParams(**d) for d in cfg["apartments"]])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_config(), f, indent=2)

    @classmethod
    def load(cls, path) -> "Building":
        with open(path, encoding="utf-8") as f:
            return cls.from_config(json.load(f))
