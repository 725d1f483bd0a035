"""Seeded synthetic trips and cohorts with known ground truth.

Every trip is generated from per-minute profiles (heart rate, skin
temperature, tonic skin conductance, weather, speed) plus a list of planted
skin-conductance responses, then rendered to raw channels at their nominal
rates.  The per-minute truth is kept next to the streams so tests never
have to recover planted values through the pipeline under test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import (
    NOMINAL_RATES, SEASONS, US_PER_S, DataError, Demographics, SensorStream, TripRecord, write_trip,
)
from .features import EARTH_RADIUS_KM, heat_indices

GRAVITY = 9.81
SCR_WIDTH_S = 2.0
SCR_AMPLITUDE = 0.3
BEAT_DUTY = 0.5

DEFAULT_NOISE = {
    "bvp": 0.02,
    "eda": 0.002,
    "skin_temp": 0.05,
    "air_temp": 0.05,
    "rel_humidity": 0.2,
    "accel": 0.3,
}


@dataclass
class TripSpec:
    participant_id: str
    demographics: Demographics
    trip_month: int
    start_us: int
    # per ride minute
    hr_bpm: np.ndarray
    t_skin: np.ndarray
    scl: np.ndarray
    t_air: np.ndarray
    r_h: np.ndarray
    speed_kmh: np.ndarray
    scr_times: Sequence[float] = ()  # seconds from ride start
    heading_deg: float = 0.0
    origin: tuple = (23.78, 90.40)
    solar: Sequence[float] = (500.0,)  # W/m^2 for consecutive hours from the start hour
    rest_min: int = 2
    noise: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    seed: int = 0

    @property
    def ride_min(self) -> int:
        return len(self.hr_bpm)

    def check(self) -> None:
        n = self.ride_min
        for name in ("t_skin", "scl", "t_air", "r_h", "speed_kmh"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{self.participant_id}: {name} profile has {len(getattr(self, name))} "
                                f"minutes, expected {n}")
        total_s = (self.rest_min + n) * 60
        hours_needed = math.ceil(((self.start_us % (3600 * US_PER_S)) / US_PER_S + total_s) / 3600)
        if len(self.solar) < hours_needed:
            raise DataError(f"{self.participant_id}: solar profile covers {len(self.solar)} h, "
                            f"trip needs {hours_needed}")
        if any(t < 0 or t >= n * 60 for t in self.scr_times):
            raise DataError(f"{self.participant_id}: SCR time outside ride")


def _minute_index(t_s: np.ndarray, n: int) -> np.ndarray:
    return np.clip((t_s // 60).astype(int), 0, n - 1)


def _pulse_train(hr_per_sample: np.ndarray, fs: float) -> np.ndarray:
    phase = np.cumsum(hr_per_sample / 60.0 / fs)
    phase = phase - phase[0]
    frac = phase % 1.0
    return np.where(frac < BEAT_DUTY, 0.5 * (1 - np.cos(2 * np.pi * frac / BEAT_DUTY)), 0.0)


def _smooth_profile(per_minute: np.ndarray, t_s: np.ndarray) -> np.ndarray:
    """Linear interpolation between minute centres (flat beyond the ends)."""
    centres = np.arange(len(per_minute)) * 60.0 + 30.0
    return np.interp(t_s, centres, per_minute)


def scr_signal(t_s: np.ndarray, times: Sequence[float], amplitude: float = SCR_AMPLITUDE,
               width_s: float = SCR_WIDTH_S) -> np.ndarray:
    out = np.zeros_like(t_s, dtype=float)
    for tc in times:
        out += amplitude * np.exp(-0.5 * ((t_s - tc) / width_s) ** 2)
    return out


def _track(origin, heading_deg, speed_kmh_per_s):
    """Lat/lon after each one-second step along a fixed heading."""
    step_km = np.concatenate([[0.0], speed_kmh_per_s[:-1] / 3600.0])
    dist = np.cumsum(step_km)
    delta = dist / EARTH_RADIUS_KM
    lat1, lon1 = np.radians(origin[0]), np.radians(origin[1])
    brg = np.radians(heading_deg)
    lat2 = np.arcsin(np.sin(lat1) * np.cos(delta) + np.cos(lat1) * np.sin(delta) * np.cos(brg))
    lon2 = lon1 + np.arctan2(np.sin(brg) * np.sin(delta) * np.cos(lat1), np.cos(delta) - np.sin(lat1) * np.sin(lat2))
    return np.degrees(lat2), np.degrees(lon2)


def generate_trip(spec: TripSpec) -> TripRecord:
    spec.check()
    rng = np.random.default_rng(spec.seed)
    n = spec.ride_min
    noise = {**DEFAULT_NOISE, **spec.noise}
    demo = spec.demographics
    ride_t0 = spec.start_us + spec.rest_min * 60 * US_PER_S

    def axis(channel, minutes):
        fs = NOMINAL_RATES[channel]
        return np.arange(int(round(minutes * 60 * fs))) / fs

    def jitter(key, size):
        sigma = noise.get(key, 0.0)
        return rng.normal(0.0, sigma, size) if sigma > 0 else np.zeros(size)

    phases = {}
    if spec.rest_min > 0:
        t = axis("bvp", spec.rest_min)
        bvp = _pulse_train(np.full(t.size, demo.hr_rest), 64.0) + jitter("bvp", t.size)
        te = axis("eda", spec.rest_min)
        eda = np.full(te.size, spec.scl[0]) + jitter("eda", te.size)
        ts = axis("skin_temp", spec.rest_min)
        skin = np.full(ts.size, spec.t_skin[0]) + jitter("skin_temp", ts.size)
        phases["rest"] = {
            "bvp": SensorStream("bvp", 64.0, spec.start_us, bvp),
            "eda": SensorStream("eda", 4.0, spec.start_us, eda),
            "skin_temp": SensorStream("skin_temp", 1.0, spec.start_us, skin),
        }

    ride = {}
    t = axis("bvp", n)
    hr = np.asarray(spec.hr_bpm, float)[_minute_index(t, n)]
    ride["bvp"] = _pulse_train(hr, 64.0) + jitter("bvp", t.size)
    te = axis("eda", n)
    ride["eda"] = (_smooth_profile(np.asarray(spec.scl, float), te) + scr_signal(te, spec.scr_times)
                   + jitter("eda", te.size))
    t1 = axis("skin_temp", n)
    m1 = _minute_index(t1, n)
    ride["skin_temp"] = np.asarray(spec.t_skin, float)[m1] + jitter("skin_temp", t1.size)
    ride["air_temp"] = np.asarray(spec.t_air, float)[m1] + jitter("air_temp", t1.size)
    ride["rel_humidity"] = np.clip(np.asarray(spec.r_h, float)[m1] + jitter("rel_humidity", t1.size), 0, 100)
    speed = np.asarray(spec.speed_kmh, float)[m1]
    ride["gps_lat"], ride["gps_lon"] = _track(spec.origin, spec.heading_deg, speed)
    ta = axis("accel_x", n)
    # road vibration: 1 s periodic, amplitude grows with speed
    vib = 0.2 + 0.05 * np.asarray(spec.speed_kmh, float)[_minute_index(ta, n)]
    ride["accel_x"] = vib * np.sin(2 * np.pi * 2 * ta) + jitter("accel", ta.size)
    ride["accel_y"] = vib * np.sin(2 * np.pi * 3 * ta) + jitter("accel", ta.size)
    ride["accel_z"] = GRAVITY + vib * np.sin(2 * np.pi * 5 * ta) + jitter("accel", ta.size)
    phases["ride"] = {ch: SensorStream(ch, NOMINAL_RATES[ch], ride_t0, v) for ch, v in ride.items()}

    hour0 = spec.start_us - spec.start_us % (3600 * US_PER_S)
    solar = tuple((hour0 + k * 3600 * US_PER_S, float(v)) for k, v in enumerate(spec.solar))
    return TripRecord(spec.participant_id, demo, phases, spec.trip_month, solar)


def ground_truth(spec: TripSpec) -> dict:
    """Per-minute planted values of a trip, aligned with the feature windows."""
    n = spec.ride_min
    ride_t0 = spec.start_us + spec.rest_min * 60 * US_PER_S
    hour0 = spec.start_us - spec.start_us % (3600 * US_PER_S)
    sr = []
    for k in range(n):
        mid = ride_t0 + (60 * k + 30) * US_PER_S
        sr.append(float(spec.solar[(mid - hour0) // (3600 * US_PER_S)]))
    t_air = np.asarray(spec.t_air, float)
    r_h = np.asarray(spec.r_h, float)
    t_wbgt = heat_indices(t_air, r_h, np.asarray(sr))[2]
    scr = np.asarray(spec.scr_times, float)
    counts = [int(np.count_nonzero((scr >= 60 * k) & (scr < 60 * (k + 1)))) for k in range(n)]
    return {
        "participant_id": spec.participant_id,
        "ride_minutes": n,
        "hr_rest": spec.demographics.hr_rest,
        "hr_bpm": np.asarray(spec.hr_bpm, float).tolist(),
        "t_skin": np.asarray(spec.t_skin, float).tolist(),
        "scl_level": np.asarray(spec.scl, float).tolist(),
        "t_air": t_air.tolist(),
        "r_h": r_h.tolist(),
        "sr": sr,
        "t_wbgt": np.atleast_1d(t_wbgt).tolist(),
        "speed_kmh": np.asarray(spec.speed_kmh, float).tolist(),
        "scr_times": scr.tolist(),
        "scr_per_minute": counts,
        "seed": spec.seed,
    }


# --- cohorts --------------------------------------------------------------

SEASON_SHARE = {"summer": 0.51, "winter": 0.21, "monsoon": 0.28}
SEASON_MONTHS = {"summer": (4, 5, 6), "monsoon": (7, 8, 9), "winter": (12, 1, 2)}
SEASON_WEATHER = {
    # t_air mean/sd, r_h mean/sd, sr mean/sd
    "summer": (33.0, 2.0, 60.0, 8.0, 600.0, 150.0),
    "monsoon": (31.0, 1.5, 78.0, 6.0, 450.0, 150.0),
    "winter": (22.0, 3.0, 55.0, 8.0, 400.0, 100.0),
}


@dataclass
class PlantedModel:
    """Linear links from weather/activity to per-minute biomarker levels.

    ``t_skin`` depends on WBGT alone; its residual noise is chosen per
    cohort so the standardized WBGT coefficient equals
    ``tskin_wbgt_standardized``.
    """

    tskin_base: float = 34.0
    tskin_wbgt: float = 0.35
    tskin_wbgt_standardized: float | None = 0.8
    hr_above_rest: float = 25.0
    hr_speed: float = 1.5
    hr_wbgt: float = 1.0
    hr_noise: float = 3.0
    scl_base: float = 3.0
    scl_wbgt: float = 0.25
    scl_noise: float = 0.1
    scr_base_rate: float = 1.0
    scr_wbgt: float = 0.12
    scr_speed: float = 0.05
    wbgt_ref: float = 28.0
    speed_ref: float = 10.0
    noise: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    tskin_noise: float | None = None  # overrides the standardized calibration when set

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Cohort:
    specs: list
    truths: list
    planted: PlantedModel

    def trips(self):
        for spec in self.specs:
            yield generate_trip(spec)


SCR_SLOTS_S = (3.0, 13.0, 23.0, 33.0, 43.0, 53.0)


def _draw_subject(i: int, seed: int, pm: PlantedModel):
    rng = np.random.default_rng([seed, i])
    season = rng.choice(SEASONS, p=[SEASON_SHARE[s] for s in SEASONS])
    month = int(rng.choice(SEASON_MONTHS[season]))
    tm, ts, hm, hs, sm, ss = SEASON_WEATHER[season]
    age = float(np.clip(rng.normal(48, 13), 18, 80))
    demo = Demographics(
        age=round(age, 0),
        bmi=round(float(np.clip(rng.normal(20.6, 2.8), 14, 35)), 1),
        sleep=round(float(np.clip(rng.normal(6.8, 1.1), 3, 10)), 1),
        t_work=round(float(np.clip(rng.normal(10, 2), 4, 16)), 1),
        hr_rest=round(float(np.clip(rng.normal(72, 8), 50, 95)), 1),
        season=str(season),
    )
    n = int(np.clip(round(rng.normal(18.9, 5)), 8, 30))
    t_air = rng.normal(tm, ts) + np.cumsum(rng.normal(0, 0.25, n))
    r_h = np.clip(rng.normal(hm, hs) + np.cumsum(rng.normal(0, 1.0, n)), 20, 98)
    speed = np.clip(rng.normal(10, 2) + np.cumsum(rng.normal(0, 0.8, n)), 3, 20)
    day = int(rng.integers(1, 28))
    hour = int(rng.integers(3, 10))  # UTC, daytime in Dhaka
    minute = int(rng.integers(0, 60))
    start = datetime(2024, month, day, hour, minute, tzinfo=timezone.utc)
    start_us = int(start.timestamp()) * US_PER_S
    sr0 = max(50.0, rng.normal(sm, ss))
    solar = [max(0.0, sr0 + rng.normal(0, 30)) for _ in range(3)]
    return rng, demo, month, start_us, n, t_air, r_h, speed, solar


def generate_cohort(n: int, planted: PlantedModel | None = None, seed: int = 0) -> Cohort:
    """``n`` trips whose biomarker profiles follow ``planted`` plus noise."""
    if n < 4:
        raise DataError("cohort needs at least 4 subjects")
    pm = planted or PlantedModel()
    drafts = []
    for i in range(n):
        rng, demo, month, start_us, m, t_air, r_h, speed, solar = _draw_subject(i, seed, pm)
        spec = TripSpec(f"P{i + 1:03d}", demo, month, start_us, np.zeros(m), np.zeros(m), np.zeros(m),
                        t_air, r_h, speed, solar=solar, noise=dict(pm.noise), seed=int(rng.integers(2 ** 31)),
                        heading_deg=float(rng.uniform(0, 360)))
        drafts.append((rng, spec, np.asarray(ground_truth(spec)["t_wbgt"])))

    all_wbgt = np.concatenate([w for _, _, w in drafts])
    if pm.tskin_noise is not None:
        tskin_sigma = pm.tskin_noise
    elif pm.tskin_wbgt_standardized:
        b = pm.tskin_wbgt_standardized
        tskin_sigma = abs(pm.tskin_wbgt) * all_wbgt.std() * math.sqrt(1.0 / b ** 2 - 1.0)
    else:
        tskin_sigma = 0.0

    specs, truths = [], []
    for rng, spec, wbgt in drafts:
        m = spec.ride_min
        d = spec.demographics
        dw = wbgt - pm.wbgt_ref
        ds = spec.speed_kmh - pm.speed_ref
        spec.t_skin = pm.tskin_base + pm.tskin_wbgt * dw + _noise(rng, tskin_sigma, m)
        hr_max = 220.0 - d.age
        spec.hr_bpm = np.clip(d.hr_rest + pm.hr_above_rest + pm.hr_speed * ds + pm.hr_wbgt * dw
                              + _noise(rng, pm.hr_noise, m), d.hr_rest + 5, min(hr_max - 5, 175))
        offset = _noise(rng, 0.3 if pm.scl_noise else 0.0, 1)[0]
        spec.scl = np.maximum(0.3, pm.scl_base + offset + pm.scl_wbgt * dw + _noise(rng, pm.scl_noise, m))
        rate = np.clip(pm.scr_base_rate + pm.scr_wbgt * dw + pm.scr_speed * ds, 0, len(SCR_SLOTS_S))
        times = []
        for k in range(m):
            count = min(int(rng.poisson(rate[k])), len(SCR_SLOTS_S))
            slots = np.sort(rng.choice(SCR_SLOTS_S, size=count, replace=False))
            times.extend((60.0 * k + slots + rng.uniform(-1, 1, count)).tolist())
        # keep clear of the ride edges so every response is fully inside the record
        spec.scr_times = [t for t in times if 5.0 <= t <= 60.0 * m - 8.0]
        specs.append(spec)
        truths.append(ground_truth(spec))
    return Cohort(specs, truths, pm)


def _noise(rng, sigma: float, size: int) -> np.ndarray:
    return rng.normal(0.0, sigma, size) if sigma > 0 else np.zeros(size)


def _write_one(args) -> Path:
    spec, truth, root = args
    d = write_trip(generate_trip(spec), root)
    (d / "ground_truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    return d


def write_cohort(cohort: Cohort, root: Path, jobs: int = 1) -> list[Path]:
    """Write each trip plus its ``ground_truth.json``; returns the trip directories."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, truth, root) for spec, truth in zip(cohort.specs, cohort.truths)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            dirs = list(ex.map(_write_one, tasks))
    else:
        dirs = [_write_one(t) for t in tasks]
    (root / "planted_model.json").write_text(json.dumps(cohort.planted.to_dict(), indent=2) + "\n")
    return dirs
