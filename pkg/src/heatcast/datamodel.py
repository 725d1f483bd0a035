"""Streams, trips, feature tables and subject splits.

Timestamps are integer microseconds since the Unix epoch.  Sample ``k`` of a
stream sits at ``t0_us + k / rate_hz`` seconds.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

US_PER_S = 1_000_000

NOMINAL_RATES = {
    "bvp": 64.0,
    "eda": 4.0,
    "skin_temp": 1.0,
    "accel_x": 64.0,
    "accel_y": 64.0,
    "accel_z": 64.0,
    "gps_lat": 1.0,
    "gps_lon": 1.0,
    "air_temp": 1.0,
    "rel_humidity": 1.0,
}
CHANNELS = tuple(NOMINAL_RATES)
PHASES = ("rest", "ride", "recovery")
SEASONS = ("summer", "winter", "monsoon")

FEATURE_COLUMNS = (
    "t_air", "r_h", "t_wbgt",
    "age", "bmi", "sleep", "t_work",
    "rcc", "scr_n", "scl", "t_skin",
    "speed", "dst_c", "acc_m", "t_drive",
)
ID_COLUMNS = ("participant_id", "window_index")
TARGETS = ("t_skin", "rcc", "scr_n", "scl")
WEATHER = ("t_air", "r_h", "t_wbgt")
ACTIVITY = ("speed", "dst_c", "acc_m", "t_drive")
DEMOGRAPHIC = ("age", "bmi", "sleep", "t_work")
# Per-window context needed downstream (climate perturbation, season encoding).
CONTEXT_COLUMNS = ("participant_id", "window_index", "sr", "trip_month", "season")

MIN_RIDE_S = 5 * 60
PHASE_ALIGN_TOL_US = 2 * US_PER_S


class DataError(ValueError):
    """Raised for malformed or physically implausible input data."""


@dataclass(frozen=True)
class SensorStream:
    channel: str
    rate_hz: float
    t0_us: int
    values: np.ndarray

    def __post_init__(self):
        if self.channel not in NOMINAL_RATES:
            raise DataError(f"unknown channel {self.channel!r}")
        if not self.rate_hz > 0:
            raise DataError(f"{self.channel}: rate must be positive")
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def duration_s(self) -> float:
        return len(self.values) / self.rate_hz

    @property
    def end_us(self) -> int:
        return self.t0_us + round(self.duration_s * US_PER_S)

    def times_s(self, ref_us: int | None = None) -> np.ndarray:
        """Sample times in seconds relative to ``ref_us`` (default: own t0)."""
        ref = self.t0_us if ref_us is None else ref_us
        return (self.t0_us - ref) / US_PER_S + np.arange(len(self.values)) / self.rate_hz

    def replace_values(self, values) -> "SensorStream":
        return SensorStream(self.channel, self.rate_hz, self.t0_us, np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Demographics:
    age: float
    bmi: float
    sleep: float
    t_work: float
    hr_rest: float
    season: str

    BOUNDS = {
        "age": (18, 100),
        "bmi": (10, 60),
        "sleep": (0, 16),
        "t_work": (0, 24),
        "hr_rest": (30, 140),
    }

    def violations(self) -> list[str]:
        out = []
        for name, (lo, hi) in self.BOUNDS.items():
            v = getattr(self, name)
            if not (lo <= v <= hi):
                out.append(f"{name} out of [{lo},{hi}]: {v}")
        if self.season not in SEASONS:
            out.append(f"season not one of {SEASONS}: {self.season!r}")
        return out


@dataclass(frozen=True)
class TripRecord:
    participant_id: str
    demographics: Demographics
    phases: Mapping[str, Mapping[str, SensorStream]]
    trip_month: int
    # (hour start in epoch microseconds, W/m^2), sorted by hour
    solar: tuple[tuple[int, float], ...] = ()

    def stream(self, phase: str, channel: str) -> SensorStream:
        try:
            return self.phases[phase][channel]
        except KeyError:
            raise DataError(f"{self.participant_id}: no {channel} stream in {phase} phase") from None

    def solar_at(self, t_us: int) -> float:
        """Solar radiation of the hour containing ``t_us``."""
        hour = t_us - t_us % (3600 * US_PER_S)
        for start, value in self.solar:
            if start == hour:
                return value
        raise DataError(f"{self.participant_id}: no solar value for hour {hour}")


@dataclass(frozen=True)
class SubjectSplit:
    train_ids: tuple
    valid_ids: tuple
    test_ids: tuple

    def to_dict(self) -> dict:
        return {"train": list(self.train_ids), "valid": list(self.valid_ids), "test": list(self.test_ids)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SubjectSplit":
        return cls(tuple(d["train"]), tuple(d["valid"]), tuple(d["test"]))


@dataclass
class ValidationReport:
    participant_id: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_trip(trip: TripRecord) -> ValidationReport:
    """Check every invariant of a trip.

    Missing ride phase and non-finite samples are fatal and raise
    :class:`DataError`; everything else is collected into the report.
    """
    report = ValidationReport(trip.participant_id)
    v = report.violations
    if "ride" not in trip.phases or not trip.phases["ride"]:
        raise DataError(f"{trip.participant_id}: missing ride phase")

    for phase, streams in trip.phases.items():
        if phase not in PHASES:
            v.append(f"unknown phase {phase!r}")
        for channel, s in streams.items():
            bad = np.flatnonzero(~np.isfinite(s.values))
            if bad.size:
                raise DataError(
                    f"{trip.participant_id}: non-finite sample in {phase}/{channel} at index {bad[0]}")
            nominal = NOMINAL_RATES[channel]
            if abs(s.rate_hz - nominal) > 0.01 * nominal:
                v.append(f"{phase}/{channel} rate {s.rate_hz} Hz differs from nominal {nominal} Hz")
            if len(s.values) < s.rate_hz * 60:
                v.append(f"{phase}/{channel} shorter than one 60 s window")
            if channel == "rel_humidity" and (np.any(s.values < 0) or np.any(s.values > 100)):
                v.append(f"r_h out of [0,100] in {phase}")
        if streams:
            starts = [s.t0_us for s in streams.values()]
            ends = [s.end_us for s in streams.values()]
            if max(starts) - min(starts) > PHASE_ALIGN_TOL_US or max(ends) - min(ends) > PHASE_ALIGN_TOL_US:
                v.append(f"{phase} streams not aligned within 2 s")

    ride = trip.phases["ride"]
    ride_s = max(s.duration_s for s in ride.values())
    if ride_s < MIN_RIDE_S:
        v.append(f"ride < 5 min ({ride_s:.0f} s)")

    v.extend(trip.demographics.violations())
    if not 1 <= trip.trip_month <= 12:
        v.append(f"trip_month out of [1,12]: {trip.trip_month}")
    if any(sr < 0 for _, sr in trip.solar):
        v.append("solar radiation negative")
    return report


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    total = float(sum(ratios))
    quotas = [n * r / total for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_subjects(ids: Iterable, ratios: Sequence[float] = (0.5, 0.25, 0.25), seed: int = 0) -> SubjectSplit:
    """Shuffle subjects with ``seed`` and cut them into train/valid/test."""
    ids = sorted(set(ids))
    if len(ids) < 4:
        raise DataError("too few subjects")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train, n_valid, _ = _largest_remainder(len(ids), ratios)
    return SubjectSplit(
        tuple(order[:n_train]),
        tuple(order[n_train:n_train + n_valid]),
        tuple(order[n_train + n_valid:]),
    )


# --- on-disk layout -------------------------------------------------------

def _hour_to_iso(us: int) -> str:
    return datetime.fromtimestamp(us / US_PER_S, tz=timezone.utc).strftime("%Y-%m-%dT%H:00:00Z")


def _iso_to_hour(text: str) -> int:
    dt = datetime.strptime(text.strip(), "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) * US_PER_S


def _sample_times_us(s: SensorStream) -> np.ndarray:
    k = np.arange(len(s.values), dtype=np.int64)
    return s.t0_us + np.round(k * (US_PER_S / s.rate_hz)).astype(np.int64)


def write_stream_csv(path: Path, s: SensorStream) -> None:
    pd.DataFrame({"timestamp_us": _sample_times_us(s), "value": s.values}).to_csv(path, index=False)


def _read_csv(path: Path, header: Sequence[str]) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != list(header):
        raise DataError(f"{path}: expected header {','.join(header)}")
    return df


def _stream_from_samples(channel: str, times_us: np.ndarray, values: np.ndarray, path: Path) -> SensorStream:
    if len(times_us) < 2:
        raise DataError(f"{path}: fewer than two samples")
    span = (times_us[-1] - times_us[0]) / US_PER_S
    rate = (len(times_us) - 1) / span
    nominal = NOMINAL_RATES[channel]
    if abs(rate - nominal) <= 0.01 * nominal:
        rate = nominal
    return SensorStream(channel, rate, int(times_us[0]), values)


def read_stream_csv(path: Path, channel: str) -> SensorStream:
    df = _read_csv(path, ["timestamp_us", "value"])
    return _stream_from_samples(channel, df["timestamp_us"].to_numpy(np.int64), df["value"].to_numpy(float), path)


def write_trip(trip: TripRecord, root: Path) -> Path:
    """Write ``trip`` under ``root/<participant_id>/``."""
    d = Path(root) / trip.participant_id
    d.mkdir(parents=True, exist_ok=True)
    demo = {
        "age": trip.demographics.age,
        "bmi": trip.demographics.bmi,
        "sleep": trip.demographics.sleep,
        "t_work": trip.demographics.t_work,
        "hr_rest": trip.demographics.hr_rest,
        "season": trip.demographics.season,
        "trip_month": trip.trip_month,
    }
    (d / "demographics.json").write_text(json.dumps(demo, indent=2) + "\n")
    pd.DataFrame({"hour_utc": [_hour_to_iso(h) for h, _ in trip.solar],
                  "sr_wm2": [float(v) for _, v in trip.solar]}).to_csv(d / "solar.csv", index=False)
    for phase, streams in trip.phases.items():
        pd_ = d / phase
        pd_.mkdir(exist_ok=True)
        for channel, s in streams.items():
            if channel in ("gps_lat", "gps_lon"):
                continue
            write_stream_csv(pd_ / f"{channel}.csv", s)
        if "gps_lat" in streams:
            lat, lon = streams["gps_lat"], streams["gps_lon"]
            pd.DataFrame({"timestamp_us": _sample_times_us(lat), "lat": lat.values, "lon": lon.values}).to_csv(
                pd_ / "gps.csv", index=False)
    return d


def read_trip(path: Path) -> TripRecord:
    d = Path(path)
    demo = json.loads((d / "demographics.json").read_text())
    try:
        demographics = Demographics(
            age=float(demo["age"]), bmi=float(demo["bmi"]), sleep=float(demo["sleep"]),
            t_work=float(demo["t_work"]), hr_rest=float(demo["hr_rest"]), season=str(demo["season"]))
        trip_month = int(demo["trip_month"])
    except KeyError as e:
        raise DataError(f"{d / 'demographics.json'}: missing field {e}") from None
    sol = _read_csv(d / "solar.csv", ["hour_utc", "sr_wm2"])
    solar = tuple((_iso_to_hour(h), float(v)) for h, v in zip(sol["hour_utc"], sol["sr_wm2"]))
    phases: dict[str, dict[str, SensorStream]] = {}
    for phase in PHASES:
        pd_ = d / phase
        if not pd_.is_dir():
            continue
        streams = {}
        for f in sorted(pd_.glob("*.csv")):
            if f.stem == "gps":
                g = _read_csv(f, ["timestamp_us", "lat", "lon"])
                t = g["timestamp_us"].to_numpy(np.int64)
                streams["gps_lat"] = _stream_from_samples("gps_lat", t, g["lat"].to_numpy(float), f)
                streams["gps_lon"] = _stream_from_samples("gps_lon", t, g["lon"].to_numpy(float), f)
            elif f.stem in NOMINAL_RATES:
                streams[f.stem] = read_stream_csv(f, f.stem)
            else:
                logger.warning("ignoring unknown channel file %s", f)
        phases[phase] = streams
    return TripRecord(d.name, demographics, phases, trip_month, solar)


def iter_trip_dirs(root: Path) -> list[Path]:
    return sorted(p for p in Path(root).iterdir() if (p / "demographics.json").is_file())


# --- feature tables -------------------------------------------------------

def write_feature_table(df: pd.DataFrame, path: Path) -> None:
    """Write the feature CSV: ids then the 15 feature columns, full float precision."""
    cols = list(ID_COLUMNS) + list(FEATURE_COLUMNS)
    missing = set(cols) - set(df.columns)
    if missing:
        raise DataError(f"feature table missing columns {sorted(missing)}")
    df[cols].to_csv(path, index=False)


def read_feature_table(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip", dtype={"participant_id": str})
    expected = list(ID_COLUMNS) + list(FEATURE_COLUMNS)
    if list(df.columns) != expected:
        raise DataError(f"{path}: expected columns {','.join(expected)}")
    df[list(FEATURE_COLUMNS)] = df[list(FEATURE_COLUMNS)].astype(float)
    return df


def write_context_table(df: pd.DataFrame, path: Path) -> None:
    df[list(CONTEXT_COLUMNS)].to_csv(path, index=False)


def read_context_table(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip", dtype={"participant_id": str, "season": str})
    if list(df.columns) != list(CONTEXT_COLUMNS):
        raise DataError(f"{path}: expected columns {','.join(CONTEXT_COLUMNS)}")
    return df
