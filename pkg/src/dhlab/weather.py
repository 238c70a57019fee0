"""
Heating-season weather series: loading, synthesis and climate statistics.

A series covers one heating season (83 days = 2002 hours, mid-December to
mid-March) of hourly outdoor temperature and global horizontal solar flux.
Synthetic series are calibrated against per-city climate statistics
(seasonal mean/std of outdoor temperature, mean/std of the daily maximum
solar flux).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

SEASON_HOURS = 2002          # 83 days, mid-December to mid-March
SEASON_START_DOY = 349       # December 15 (non-leap year), hour 0
LATITUDE_DEG = 35.0          # reference latitude for solar geometry

CSV_HEADER = ["hour_index", "hour_of_day", "day_of_year", "t_out_c", "ghi_wm2"]


class WeatherError(ValueError):
    """Malformed or physically inconsistent weather data."""


@dataclass(frozen=True)
class WeatherRecord:
    """One hour of weather: outdoor temperature and horizontal solar flux."""

    hour_index: int
    hour_of_day: int
    day_of_year: int
    t_out: float    # °C
    ghi: float      # W/m²


@dataclass(frozen=True)
class ClimateStats:
    """Season-level climate summary used to calibrate synthetic weather."""

    mean_t_out: float           # °C
    std_t_out: float            # °C
    mean_daily_max_ghi: float   # W·h/m²
    std_daily_max_ghi: float    # W·h/m²

    def __post_init__(self):
        if self.std_t_out < 0 or self.std_daily_max_ghi < 0:
            raise WeatherError("climate stats standard deviations must be >= 0")


#: Per-city heating-season climate statistics (mean T_out, std T_out,
#: mean daily-max GHI, std daily-max GHI).
CITY_STATS: Dict[str, ClimateStats] = {
    "Beijing": ClimateStats(6.92, 7.58, 634.0, 186.0),
    "Chengdu": ClimateStats(12.36, 4.78, 374.0, 261.0),
    "Harbin": ClimateStats(-3.37, 10.01, 533.0, 167.0),
    "Shenyang": ClimateStats(1.87, 1.87, 582.0, 198.0),
    "Shijiazhuang": ClimateStats(8.27, 7.20, 555.0, 211.0),
    "Xian": ClimateStats(8.40, 6.67, 510.0, 226.0),
    "Yuncheng": ClimateStats(2.53, 5.81, 631.0, 315.0),
    "Zhengzhou": ClimateStats(8.81, 6.69, 580.0, 230.0),
}

TRAINING_CITIES = [c for c in CITY_STATS if c != "Yuncheng"]
TEST_CITY = "Yuncheng"


class WeatherSeries:
    """Ordered hourly weather records for one city and one season.

    Immutable after construction; the underlying arrays are set read-only
    so a series can safely be shared across threads.
    """

    def __init__(self, city: str, records: List[WeatherRecord]):
        if not records:
            raise WeatherError("weather series must contain at least one record")
        self.city = city
        self.hour_index = np.array([r.hour_index for r in records], dtype=np.int64)
        self.hour_of_day = np.array([r.hour_of_day for r in records], dtype=np.int64)
        self.day_of_year = np.array([r.day_of_year for r in records], dtype=np.int64)
        self.t_out = np.array([r.t_out for r in records], dtype=np.float64)
        self.ghi = np.array([r.ghi for r in records], dtype=np.float64)
        self._validate()
        for a in (self.hour_index, self.hour_of_day, self.day_of_year,
                  self.t_out, self.ghi):
            a.flags.writeable = False

    @classmethod
    def from_arrays(cls, city, hour_index, hour_of_day, day_of_year, t_out, ghi):
        obj = cls.__new__(cls)
        obj.city = city
        obj.hour_index = np.asarray(hour_index, dtype=np.int64)
        obj.hour_of_day = np.asarray(hour_of_day, dtype=np.int64)
        obj.day_of_year = np.asarray(day_of_year, dtype=np.int64)
        obj.t_out = np.asarray(t_out, dtype=np.float64)
        obj.ghi = np.asarray(ghi, dtype=np.float64)
        obj._validate()
        for a in (obj.hour_index, obj.hour_of_day, obj.day_of_year,
                  obj.t_out, obj.ghi):
            a.flags.writeable = False
        return obj

    def _validate(self):
        n = len(self.hour_index)
        if n == 0:
            raise WeatherError("empty weather series")
        diffs = np.diff(self.hour_index)
        if np.any(diffs != 1):
            bad = int(np.argmax(diffs != 1))
            raise WeatherError(
                f"hour_index must increase by 1; gap after row {bad} "
                f"(hour_index {self.hour_index[bad]})")
        offset = (self.hour_of_day[0] - self.hour_index[0]) % 24
        expect = (self.hour_index + offset) % 24
        if np.any(self.hour_of_day != expect):
            bad = int(np.argmax(self.hour_of_day != expect))
            raise WeatherError(f"hour_of_day inconsistent with hour_index at row {bad}")
        if np.any(self.ghi < 0):
            bad = int(np.argmax(self.ghi < 0))
            raise WeatherError(f"negative ghi at row {bad}")
        if not (np.all(np.isfinite(self.t_out)) and np.all(np.isfinite(self.ghi))):
            raise WeatherError("non-finite values in weather series")

    def __len__(self):
        return len(self.hour_index)

    def record(self, i: int) -> WeatherRecord:
        return WeatherRecord(
            int(self.hour_index[i]), int(self.hour_of_day[i]),
            int(self.day_of_year[i]), float(self.t_out[i]), float(self.ghi[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)


# ---------------------------------------------------------------------------
# Solar geometry
# ---------------------------------------------------------------------------

def solar_declination_deg(day_of_year):
    """Solar declination (degrees) from the standard cosine approximation."""
    return -23.45 * np.cos(np.radians(360.0 / 365.0 * (np.asarray(day_of_year) + 10)))


def solar_elevation_sin(day_of_year, hour_of_day):
    """Sine of the solar elevation at the reference latitude."""
    decl = np.radians(solar_declination_deg(day_of_year))
    lat = math.radians(LATITUDE_DEG)
    hour_angle = np.radians(15.0 * (np.asarray(hour_of_day, dtype=float) - 12.0))
    return (np.sin(lat) * np.sin(decl)
            + np.cos(lat) * np.cos(decl) * np.cos(hour_angle))


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def _season_calendar(season_len: int):
    hour_index = np.arange(season_len, dtype=np.int64)
    hour_of_day = hour_index % 24
    doy = (SEASON_START_DOY - 1 + hour_index // 24) % 365 + 1
    return hour_index, hour_of_day, doy


def synthesize_weather(stats: ClimateStats, season_len: int = SEASON_HOURS,
                       seed: int = 0, city: str = "synthetic") -> WeatherSeries:
    """Generate an hourly weather season matching the given climate statistics.

    Outdoor temperature is a seasonal mean plus a diurnal sinusoid
    (amplitude 0.6·std) plus AR(1) noise (persistence 0.9); the noise sample
    is centred and rescaled so the empirical mean and std of the series hit
    the targets.  Solar flux follows the clear-sky elevation curve, scaled
    per day by a lognormal cloudiness factor calibrated to the daily-max
    statistics.

    Deterministic in (stats, season_len, seed).
    """
    if season_len < 24:
        raise WeatherError("season_len must be at least 24 hours")
    rng = np.random.default_rng(seed)
    hour_index, hour_of_day, doy = _season_calendar(season_len)

    # temperature: diurnal sinusoid peaking mid-afternoon (15h)
    diurnal = 0.6 * stats.std_t_out * np.cos(2 * np.pi * (hour_of_day - 15) / 24.0)
    noise = np.empty(season_len)
    rho = 0.9
    innov = rng.standard_normal(season_len)
    noise[0] = innov[0]
    for t in range(1, season_len):
        noise[t] = rho * noise[t - 1] + math.sqrt(1 - rho * rho) * innov[t]
    noise -= noise.mean()
    var_needed = stats.std_t_out ** 2 - np.var(diurnal)
    nv = np.var(noise)
    scale = math.sqrt(max(var_needed, 0.0) / nv) if nv > 0 else 0.0
    t_out = stats.mean_t_out + diurnal + scale * noise

    # solar: per-day normalized clear-sky profile times a lognormal daily factor
    elev = np.maximum(solar_elevation_sin(doy, hour_of_day), 0.0)
    n_days = (season_len + 23) // 24
    ghi = np.zeros(season_len)
    m, s = stats.mean_daily_max_ghi, stats.std_daily_max_ghi
    if m > 0:
        if s > 0:
            sigma2 = math.log(1.0 + (s / m) ** 2)
            mu = math.log(m) - sigma2 / 2.0
            factors = rng.lognormal(mu, math.sqrt(sigma2), size=n_days)
            factors *= m / factors.mean()
        else:
            factors = np.full(n_days, m)
        for d in range(n_days):
            sl = slice(d * 24, min((d + 1) * 24, season_len))
            peak = elev[sl].max()
            if peak > 0:
                ghi[sl] = factors[d] * elev[sl] / peak

    return WeatherSeries.from_arrays(city, hour_index, hour_of_day, doy, t_out, ghi)


def climate_stats(series: WeatherSeries) -> ClimateStats:
    """Empirical climate statistics of a series (daily maxima over full days)."""
    n_days = len(series) // 24
    if n_days == 0:
        daily_max = np.array([series.ghi.max()])
    else:
        daily_max = series.ghi[:n_days * 24].reshape(n_days, 24).max(axis=1)
    return ClimateStats(
        float(series.t_out.mean()), float(series.t_out.std()),
        float(daily_max.mean()), float(daily_max.std()))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_weather(path, city: str | None = None) -> WeatherSeries:
    """Load a weather series from CSV (schema: hour_index,hour_of_day,
    day_of_year,t_out_c,ghi_wm2). Raises WeatherError with the offending
    line number on parse failure."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise WeatherError(f"{path}: bad header {header!r}, expected {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(WeatherRecord(int(row[0]), int(row[1]), int(row[2]),
                                          float(row[3]), float(row[4])))
            except (ValueError, IndexError) as e:
                raise WeatherError(f"{path}: line {lineno}: {e}") from e
    if city is None:
        city = str(path)
    return WeatherSeries(city, rows)


def save_weather(series: WeatherSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for i in range(len(series)):
            w.writerow([int(series.hour_index[i]), int(series.hour_of_day[i]),
                        int(series.day_of_year[i]),
                        f"{series.t_out[i]:.4f}", f"{series.ghi[i]:.4f}"])


def load_city_stats(path) -> Dict[str, ClimateStats]:
    """Load per-city climate statistics from a JSON key-value file."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    out = {}
    for city, d in raw.items():
        out[city] = ClimateStats(float(d["mean_t_out"]), float(d["std_t_out"]),
                                 float(d["mean_daily_max_ghi"]),
                                 float(d["std_daily_max_ghi"]))
    return out


def save_city_stats(stats: Dict[str, ClimateStats], path) -> None:
    raw = {c: {"mean_t_out": s.mean_t_out, "std_t_out": s.std_t_out,
               "mean_daily_max_ghi": s.mean_daily_max_ghi,
               "std_daily_max_ghi": s.std_daily_max_ghi}
           for c, s in stats.items()}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(raw, f, indent=2)
