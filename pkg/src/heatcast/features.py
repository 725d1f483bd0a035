"""One-minute feature rows: weather heat indices, cardiac cost, activity."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import dsp
from .datamodel import (
    CONTEXT_COLUMNS, FEATURE_COLUMNS, ID_COLUMNS, US_PER_S, DataError, TripRecord, SensorStream,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
WINDOW_S = 60

STULL_T_RANGE = (-20.0, 50.0)
STULL_RH_RANGE = (5.0, 99.0)


class ClampWarning(UserWarning):
    """Input moved into the validity range of an empirical formula."""


def globe_temperature(sr, t_air, r_h):
    """Globe temperature (degC) from solar radiation (W/m^2), air temperature and RH."""
    return 0.009624 * sr + 1.102 * t_air - 0.00404 * r_h - 2.2776


def natural_wet_bulb(t_air, r_h):
    """Wet-bulb temperature after Stull (2011), capped at the dry-bulb temperature.

    Inputs outside -20..50 degC or 5..99 %RH are clamped into range and a
    :class:`ClampWarning` is issued.
    """
    t = np.asarray(t_air, dtype=float)
    rh = np.asarray(r_h, dtype=float)
    tc = np.clip(t, *STULL_T_RANGE)
    rhc = np.clip(rh, *STULL_RH_RANGE)
    if np.any(tc != t) or np.any(rhc != rh):
        warnings.warn("natural_wet_bulb inputs clamped to the Stull validity range", ClampWarning,
                      stacklevel=2)
    tw = (tc * np.arctan(0.151977 * np.sqrt(rhc + 8.313659))
          + np.arctan(tc + rhc) - np.arctan(rhc - 1.676331)
          + 0.00391838 * rhc ** 1.5 * np.arctan(0.023101 * rhc) - 4.686035)
    tw = np.minimum(tw, t)
    return float(tw) if tw.ndim == 0 else tw


def wbgt(t_w, t_air, t_g):
    return 0.7 * t_w + 0.1 * t_air + 0.2 * t_g


def heat_indices(t_air, r_h, sr):
    """(t_w, t_g, t_wbgt) from air temperature, humidity and solar radiation."""
    t_w = natural_wet_bulb(t_air, r_h)
    t_g = globe_temperature(sr, t_air, r_h)
    return t_w, t_g, wbgt(t_w, t_air, t_g)


def ncc(minute_hr, hr_rest: float, period_min: float) -> float:
    """Net cardiac cost: summed per-minute working HR minus resting beats over the period."""
    minute_hr = np.asarray(minute_hr, dtype=float)
    if minute_hr.size == 0:
        raise ValueError("empty heart-rate series")
    if period_min <= 0:
        raise ValueError("period must be positive")
    return float(minute_hr.sum() - hr_rest * period_min)


def minute_means(hr: dsp.HeartRateSeries, n_minutes: int) -> np.ndarray:
    """Mean HR of each minute ``[60k, 60k+60)`` of ``hr.times``; NaN where empty."""
    if hr.hr_bpm.size == 0:
        raise ValueError("empty heart-rate series")
    idx = np.floor(hr.times / 60.0).astype(int)
    out = np.full(n_minutes, np.nan)
    for k in range(n_minutes):
        sel = idx == k
        if sel.any():
            out[k] = hr.hr_bpm[sel].mean()
    return out


def rcc(ncc_beats: float, hr_max: float, hr_rest: float, period_min: float) -> float:
    """Relative cardiac cost in percent of heart-rate reserve."""
    if hr_max <= hr_rest:
        raise ValueError(f"hr_max ({hr_max}) must exceed hr_rest ({hr_rest})")
    if period_min <= 0:
        raise ValueError("period must be positive")
    return ncc_beats / ((hr_max - hr_rest) * period_min) * 100.0


def age_predicted_hr_max(age: float) -> float:
    return 220.0 - age


@dataclass(frozen=True)
class CardiacCost:
    ncc: float
    rcc: float
    hr_max: float
    hr_rest: float
    working_period_min: float


def cardiac_cost(minute_hr, hr_rest: float, hr_max: float) -> CardiacCost:
    minute_hr = np.asarray(minute_hr, dtype=float)
    period = float(minute_hr.size)
    n = ncc(minute_hr, hr_rest, period)
    return CardiacCost(n, rcc(n, hr_max, hr_rest, period), hr_max, hr_rest, period)


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def cumulative_distance_km(lat, lon) -> np.ndarray:
    """Distance travelled up to each fix, starting at 0."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    steps = haversine_km(lat[:-1], lon[:-1], lat[1:], lon[1:])
    return np.concatenate([[0.0], np.cumsum(steps)])


def acceleration_magnitude(x, y, z) -> np.ndarray:
    return np.sqrt(np.square(x) + np.square(y) + np.square(z))


def activity_features(gps_t_s, lat, lon, acc_t_s, acc_xyz, window: tuple[float, float],
                      ride_start_s: float = 0.0) -> dict:
    """Speed, cumulative distance, acceleration magnitude and drive time for one window.

    ``window`` is ``(start, end)`` in the same seconds scale as the sample
    times.  Fixes before ``ride_start_s`` do not count towards distance.
    """
    start, end = window
    gps_t_s = np.asarray(gps_t_s, dtype=float)
    on_ride = gps_t_s >= ride_start_s
    dist = cumulative_distance_km(np.asarray(lat)[on_ride], np.asarray(lon)[on_ride])
    t = gps_t_s[on_ride]
    in_win = np.flatnonzero((t >= start) & (t < end))
    upto = np.flatnonzero(t <= end)
    dst_c = float(dist[upto[-1]]) if upto.size else 0.0
    if in_win.size < 2:
        speed = math.nan
    else:
        first, last = in_win[0], in_win[-1]
        # the step into the first fix of the next window completes the minute
        if last + 1 < len(t) and t[last + 1] <= end:
            last += 1
        speed = (dist[last] - dist[first]) / ((t[last] - t[first]) / 3600.0)
    acc_t_s = np.asarray(acc_t_s, dtype=float)
    sel = (acc_t_s >= start) & (acc_t_s < end)
    ax, ay, az = (np.asarray(a)[sel] for a in acc_xyz)
    acc_m = float(acceleration_magnitude(ax, ay, az).mean()) if sel.any() else math.nan
    return {
        "speed": float(speed),
        "dst_c": dst_c,
        "acc_m": acc_m,
        "t_drive": (end - ride_start_s) / 60.0,
    }


def resting_heart_rate(trip: TripRecord) -> float:
    """Mean extracted HR over the rest phase; the demographic value when unavailable."""
    rest = trip.phases.get("rest", {})
    if "bvp" in rest:
        try:
            hr = dsp.extract_heart_rate(dsp.filter_bvp(rest["bvp"]))
        except DataError:
            hr = None
        if hr is not None and hr.hr_bpm.size:
            return float(hr.hr_bpm.mean())
    return float(trip.demographics.hr_rest)


def _window_mean(s: SensorStream, ref_us: int, start: float, end: float) -> float:
    t = s.times_s(ref_us)
    sel = (t >= start) & (t < end)
    return float(s.values[sel].mean()) if sel.any() else math.nan


MANDATORY = ("bvp", "eda", "skin_temp", "accel_x", "accel_y", "accel_z",
             "gps_lat", "gps_lon", "air_temp", "rel_humidity")


def window_features(trip: TripRecord, rcc_mode: str = "cumulative", hr_max: float | None = None,
                    ) -> pd.DataFrame:
    """Feature rows for every complete, non-overlapping minute of the ride.

    Returns a frame with the id columns, the 15 feature columns and the
    context columns (``sr``, ``trip_month``, ``season``).  Rows whose
    window lacks data for a mandatory channel are dropped with a warning.
    """
    if rcc_mode not in ("cumulative", "window"):
        raise ValueError(f"rcc_mode must be 'cumulative' or 'window', got {rcc_mode!r}")
    ride = trip.phases.get("ride")
    if not ride:
        raise DataError(f"{trip.participant_id}: missing ride phase")
    missing = [c for c in MANDATORY if c not in ride]
    if missing:
        logger.warning("%s: ride lacks channels %s; no rows", trip.participant_id, missing)
        return _empty_frame()

    ref = min(s.t0_us for s in ride.values())
    ride_end = min(s.times_s(ref)[-1] + 1.0 / s.rate_hz for s in ride.values())
    n_windows = int(np.floor(ride_end / WINDOW_S + 1e-9))
    if n_windows == 0:
        return _empty_frame()

    demo = trip.demographics
    hr_rest = resting_heart_rate(trip)
    hr_max = age_predicted_hr_max(demo.age) if hr_max is None else hr_max

    hr = dsp.extract_heart_rate(dsp.filter_bvp(ride["bvp"]), ref_us=ref)
    if hr.hr_bpm.size == 0:
        logger.warning("%s: no heart-rate samples on ride; no rows", trip.participant_id)
        return _empty_frame()
    hr_min = minute_means(hr, n_windows)

    eda = dsp.decompose_eda(dsp.filter_eda(ride["eda"]))
    eda_t = ride["eda"].times_s(ref)
    scr_t = eda.scr_times + eda_t[0]

    gps_t = ride["gps_lat"].times_s(ref)
    acc_t = ride["accel_x"].times_s(ref)
    acc = (ride["accel_x"].values, ride["accel_y"].values, ride["accel_z"].values)

    rows = []
    for k in range(n_windows):
        start, end = k * WINDOW_S, (k + 1) * WINDOW_S
        row = {"participant_id": trip.participant_id, "window_index": k}
        t_air = _window_mean(ride["air_temp"], ref, start, end)
        r_h = _window_mean(ride["rel_humidity"], ref, start, end)
        mid_us = ref + int((start + end) / 2 * US_PER_S)
        try:
            sr = trip.solar_at(mid_us)
        except DataError as e:
            logger.warning("%s window %d dropped: %s", trip.participant_id, k, e)
            continue
        act = activity_features(gps_t, ride["gps_lat"].values, ride["gps_lon"].values, acc_t, acc,
                                (start, end))
        sel = (eda_t >= start) & (eda_t < end)
        values = {
            "t_air": t_air,
            "r_h": r_h,
            "t_skin": _window_mean(ride["skin_temp"], ref, start, end),
            "scl": float(eda.scl_series[sel].mean()) if sel.any() else math.nan,
            "scr_n": float(np.count_nonzero((scr_t >= start) & (scr_t < end))),
            **act,
        }
        if np.isnan(hr_min[k]):
            values["rcc"] = math.nan
        elif rcc_mode == "cumulative":
            done = hr_min[: k + 1]
            values["rcc"] = cardiac_cost(done[~np.isnan(done)], hr_rest, hr_max).rcc
        else:
            values["rcc"] = cardiac_cost(hr_min[k:k + 1], hr_rest, hr_max).rcc
        bad = [name for name, v in values.items() if isinstance(v, float) and math.isnan(v)]
        if bad:
            logger.warning("%s window %d dropped: missing %s", trip.participant_id, k, bad)
            continue
        values["t_wbgt"] = heat_indices(t_air, r_h, sr)[2]
        row.update(values)
        row.update(age=demo.age, bmi=demo.bmi, sleep=demo.sleep, t_work=demo.t_work,
                   sr=sr, trip_month=trip.trip_month, season=demo.season)
        rows.append(row)
    if not rows:
        return _empty_frame()
    return pd.DataFrame(rows, columns=_all_columns())


def _all_columns() -> list[str]:
    return list(ID_COLUMNS) + list(FEATURE_COLUMNS) + [c for c in CONTEXT_COLUMNS if c not in ID_COLUMNS]


def _empty_frame() -> pd.DataFrame:
    return pd.DataFrame(columns=_all_columns())


def build_feature_table(trips, rcc_mode: str = "cumulative", jobs: int = 1) -> pd.DataFrame:
    """Feature rows for many trips, ordered by (participant_id, window_index)."""
    trips = list(trips)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            frames = list(ex.map(window_features, trips, [rcc_mode] * len(trips)))
    else:
        frames = [window_features(t, rcc_mode) for t in trips]
    frames = [f for f in frames if len(f)]
    if not frames:
        return _empty_frame()
    df = pd.concat(frames, ignore_index=True)
    df["window_index"] = df["window_index"].astype(int)
    df["trip_month"] = df["trip_month"].astype(int)
    for c in FEATURE_COLUMNS:
        df[c] = df[c].astype(float)
    return df.sort_values(list(ID_COLUMNS), kind="mergesort").reset_index(drop=True)
