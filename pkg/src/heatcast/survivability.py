"""Heat-risk bands, exposure metrics and bootstrap uncertainty over climate ensembles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .climate import (
    BASELINE_YEARS, FUTURE_WINDOWS, ClimateEnsemble, MonthlyDeltas, apply_deltas, forecast_biomarkers,
    monthly_delta, window_label,
)
from .lgbn import DAG, fit_lgbn, joint_gaussian

logger = logging.getLogger(__name__)

RISK_BANDS = (
    ("no_stress", -math.inf, 27.8),
    ("mild", 27.8, 29.4),
    ("moderate", 29.4, 31.1),
    ("high", 31.1, 32.2),
    ("extreme", 32.2, math.inf),
)
SEVERITY = {name: i for i, (name, _, _) in enumerate(RISK_BANDS)}

CRITERIA = {
    "wbgt_gt_31_1": ("t_wbgt", 31.1),
    "tskin_gt_35": ("pred_t_skin", 35.0),
}
SURVIVABILITY_COLUMNS = ["criterion", "ssp", "window", "pct_participants_mean", "pct_participants_std",
                         "duration_min_mean", "duration_min_std", "pct_trip_mean", "pct_trip_std"]
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class RiskBand:
    name: str
    lower: float
    upper: float

    @property
    def severity(self) -> int:
        return SEVERITY[self.name]


def classify_wbgt(t_wbgt: float) -> RiskBand:
    """Band of a WBGT value; intervals are half-open ``[lower, upper)``."""
    if not math.isfinite(t_wbgt):
        raise ValueError("WBGT must be finite")
    for name, lo, hi in RISK_BANDS:
        if t_wbgt < hi:
            return RiskBand(name, lo, hi)
    raise AssertionError("unreachable")


@dataclass
class ExposureSummary:
    criterion: str
    pct_participants: float
    mean_duration_min: float
    mean_pct_of_trip: float
    pct_participants_std: float = math.nan
    mean_duration_min_std: float = math.nan
    mean_pct_of_trip_std: float = math.nan

    def as_tuple(self) -> tuple[float, float, float]:
        return self.pct_participants, self.mean_duration_min, self.mean_pct_of_trip


def exposure_metrics(rows: pd.DataFrame, value_column: str, threshold: float, criterion: str = "",
                     participant_column: str = "participant_id") -> ExposureSummary:
    """Exposure of participants whose per-minute ``value_column`` exceeds ``threshold``.

    A participant is exposed if any minute exceeds the threshold.  Duration
    and share of trip are averaged over exposed participants only, so both
    are NaN when nobody is exposed.
    """
    if rows.empty:
        raise ValueError("no rows")
    above = rows[value_column].to_numpy(float) > threshold
    grouped = pd.DataFrame({"pid": rows[participant_column].to_numpy(), "above": above}).groupby("pid")["above"]
    minutes = grouped.sum().to_numpy(float)
    trip = grouped.size().to_numpy(float)
    exposed = minutes > 0
    pct = 100.0 * exposed.sum() / len(minutes)
    if exposed.any():
        duration = float(minutes[exposed].mean())
        share = float((100.0 * minutes[exposed] / trip[exposed]).mean())
    else:
        duration = share = math.nan
    return ExposureSummary(criterion, float(pct), duration, share)


def _moments(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan
    if v.min() == v.max():  # summation rounding would leave a spurious ~1e-15 spread
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std())


def resample_subjects(ids: Sequence, seed: int, draw: int) -> list:
    """Subjects drawn with replacement for bootstrap draw ``draw``."""
    rng = np.random.default_rng([seed, draw])
    ids = list(ids)
    return [ids[i] for i in rng.integers(0, len(ids), size=len(ids))]


def bootstrap_table(table: pd.DataFrame, ids: Sequence) -> pd.DataFrame:
    parts = [table[table["participant_id"] == pid] for pid in ids]
    return pd.concat(parts, ignore_index=True)


@dataclass
class BootstrapResult:
    summary: pd.DataFrame  # survivability.csv rows
    cells: pd.DataFrame  # one row per (draw, member, window, criterion)
    failures: int = 0
    draws: int = 0
    notes: dict = field(default_factory=dict)


def _exposure_from_codes(above: np.ndarray, codes: np.ndarray, n_groups: int) -> tuple[float, float, float]:
    minutes = np.bincount(codes, weights=above.astype(float), minlength=n_groups)
    trip = np.bincount(codes, minlength=n_groups).astype(float)
    exposed = minutes > 0
    pct = 100.0 * exposed.sum() / n_groups
    if not exposed.any():
        return float(pct), math.nan, math.nan
    return float(pct), float(minutes[exposed].mean()), float((100.0 * minutes[exposed] / trip[exposed]).mean())


def _draw(args):
    b, seed, structure, train, train_ids, cells, criteria, codes, n_groups = args
    sample = bootstrap_table(train, resample_subjects(train_ids, seed, b))
    net = fit_lgbn(structure, sample)
    joint = joint_gaussian(net)
    predicted = {c: (col[5:], thr) for c, (col, thr) in criteria.items() if col.startswith("pred_")}
    out = []
    for key, pert, fixed in cells:
        pred = forecast_biomarkers(net, pert, joint=joint) if predicted else None
        for crit in criteria:
            if crit in fixed:
                out.append((b, *key, crit, *fixed[crit]))
            else:
                target, thr = predicted[crit]
                above = pred[f"pred_{target}"].to_numpy() > thr
                out.append((b, *key, crit, *_exposure_from_codes(above, codes, n_groups)))
    return out


def bootstrap_uncertainty(rows: pd.DataFrame, structure: DAG, train: pd.DataFrame, ensemble: ClimateEnsemble,
                          ssp: str, windows: Sequence[Sequence[int]] = FUTURE_WINDOWS, B: int = 200,
                          seed: int = 0, baseline_years=BASELINE_YEARS, include_present: bool = True,
                          jobs: int = 1, criteria: dict = CRITERIA) -> BootstrapResult:
    """Exposure mean and std over the (ensemble member x bootstrap draw) grid.

    Each draw resamples training subjects with replacement, refits the
    network parameters on the fixed ``structure`` and forecasts ``rows``
    under every member's deltas for each window.  With ``include_present``
    an unperturbed present-day cell is added per draw.  ``criteria`` maps a
    name to ``(column, threshold)``; ``pred_*`` columns are forecast per
    draw, any other column is read from the perturbed rows.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    train_ids = sorted(train["participant_id"].unique())
    members = ensemble.members(ssp)
    cells = []
    if include_present:
        cells.append((("present", window_label(baseline_years)), MonthlyDeltas.zero()))
    for member in members:
        for win in windows:
            cells.append(((member, window_label(win)), monthly_delta(ensemble, member, ssp, win, baseline_years)))
    codes, uniques = pd.factorize(rows["participant_id"])
    prepared = []
    for key, deltas in cells:
        pert = apply_deltas(rows, deltas)
        fixed = {c: _exposure_from_codes(pert[col].to_numpy(float) > thr, codes, len(uniques))
                 for c, (col, thr) in criteria.items() if not col.startswith("pred_")}
        prepared.append((key, pert, fixed))
    tasks = [(b, seed, structure, train, train_ids, prepared, criteria, codes, len(uniques)) for b in range(B)]

    records, failures = [], 0
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_draw, t) for t in tasks]
            results = []
            for f in futures:
                try:
                    results.append(f.result())
                except (np.linalg.LinAlgError, ValueError) as e:
                    logger.warning("bootstrap draw failed: %s", e)
                    failures += 1
    else:
        results = []
        for t in tasks:
            try:
                results.append(_draw(t))
            except (np.linalg.LinAlgError, ValueError) as e:
                logger.warning("bootstrap draw %d failed: %s", t[0], e)
                failures += 1
    if failures > MAX_FAILURE_FRACTION * B:
        raise RuntimeError(f"{failures} of {B} bootstrap refits failed")
    for r in results:
        records.extend(r)
    grid = pd.DataFrame(records, columns=["draw", "member", "window", "criterion", "pct_participants",
                                          "duration_min", "pct_trip"])
    summary_rows = []
    for (crit, win), g in grid.groupby(["criterion", "window"], sort=False):
        member = g["member"].iloc[0]
        scen = "present" if member == "present" else ssp
        p = _moments(g["pct_participants"])
        d = _moments(g["duration_min"])
        s = _moments(g["pct_trip"])
        summary_rows.append((crit, scen, win, p[0], p[1], d[0], d[1], s[0], s[1]))
    summary = pd.DataFrame(summary_rows, columns=SURVIVABILITY_COLUMNS)
    order = {c: i for i, c in enumerate(criteria)}
    summary = summary.sort_values(["criterion", "window"], key=lambda s: s.map(order) if s.name == "criterion"
                                  else s).reset_index(drop=True)
    notes = {"members": members, "draws": B, "failures": failures}
    return BootstrapResult(summary, grid, failures, B, notes)


def per_source_breakdown(result: BootstrapResult) -> pd.DataFrame:
    """Std across members (draw-averaged) and across draws (member-averaged), per cell."""
    g = result.cells[result.cells["member"] != "present"]
    rows = []
    for (crit, win), sub in g.groupby(["criterion", "window"], sort=True):
        for metric in ("pct_participants", "duration_min", "pct_trip"):
            by_member = sub.groupby("member")[metric].mean()
            by_draw = sub.groupby("draw")[metric].mean()
            rows.append((crit, win, metric, _moments(by_member)[1], _moments(by_draw)[1]))
    return pd.DataFrame(rows, columns=["criterion", "window", "metric", "ensemble_std", "bootstrap_std"])


def present_day(rows: pd.DataFrame, net=None) -> pd.DataFrame:
    """Exposure on observed data: measured WBGT and skin temperature, plus predicted skin temperature."""
    out = [("wbgt_gt_31_1", "measured", exposure_metrics(rows, "t_wbgt", 31.1)),
           ("tskin_gt_35", "measured", exposure_metrics(rows, "t_skin", 35.0))]
    if net is not None:
        pred = forecast_biomarkers(net, rows)
        frame = pd.concat([rows[["participant_id"]], pred], axis=1)
        out.append(("tskin_gt_35", "predicted", exposure_metrics(frame, "pred_t_skin", 35.0)))
    return pd.DataFrame(
        [(c, src, *s.as_tuple()) for c, src, s in out],
        columns=["criterion", "source", "pct_participants", "duration_min", "pct_trip"])
