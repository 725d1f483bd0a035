"""Monthly climate-model deltas applied to observed weather, and biomarker forecasts."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .datamodel import TARGETS, DataError
from .features import heat_indices
from .lgbn import GaussianNetwork, joint_gaussian, predict

logger = logging.getLogger(__name__)

ENSEMBLE_COLUMNS = ["model", "ssp", "year", "month", "tas_c", "hurs_pct", "rsds_wm2"]
SSPS = ("ssp126", "ssp245", "ssp370", "ssp585")
BASELINE_YEARS = (2023, 2025)
FUTURE_WINDOWS = (
    (2026, 2030), (2031, 2040), (2041, 2050), (2051, 2060),
    (2061, 2070), (2071, 2080), (2081, 2090), (2091, 2100),
)
FORECAST_COLUMNS = ["model", "ssp", "window", "participant_id", "window_index", "t_air", "r_h", "t_wbgt",
                    "pred_t_skin", "pred_rcc", "pred_scr_n", "pred_scl"]


def window_label(years: Sequence[int]) -> str:
    return f"{years[0]}-{years[1]}"


@dataclass(frozen=True)
class ClimateEnsemble:
    records: pd.DataFrame

    @property
    def models(self) -> list[str]:
        return sorted(self.records["model"].unique())

    def members(self, ssp: str) -> list[str]:
        return sorted(self.records.loc[self.records["ssp"] == ssp, "model"].unique())


def load_ensemble(path) -> ClimateEnsemble:
    """Read and validate an ensemble CSV; any bad row is fatal."""
    df = pd.read_csv(path, dtype={"model": str, "ssp": str})
    missing = [c for c in ENSEMBLE_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    return ClimateEnsemble(validate_ensemble(df[ENSEMBLE_COLUMNS], source=str(path)))


def validate_ensemble(df: pd.DataFrame, source: str = "ensemble") -> pd.DataFrame:
    df = df.reset_index(drop=True).copy()
    for i, row in enumerate(df.itertuples(index=False), start=2):  # header is row 1
        if row.ssp not in SSPS:
            raise DataError(f"{source} row {i}: unknown scenario {row.ssp!r}")
        if not 1 <= row.month <= 12 or int(row.month) != row.month:
            raise DataError(f"{source} row {i}: month {row.month} out of range 1-12")
        if not 2015 <= row.year <= 2100:
            raise DataError(f"{source} row {i}: year {row.year} out of range 2015-2100")
        if not 0 <= row.hurs_pct <= 100:
            raise DataError(f"{source} row {i}: hurs {row.hurs_pct} out of range 0-100")
        if not all(np.isfinite([row.tas_c, row.hurs_pct, row.rsds_wm2])):
            raise DataError(f"{source} row {i}: non-finite value")
    key = ["model", "ssp", "year", "month"]
    dup = df.duplicated(key, keep="first")
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        r = df.iloc[i]
        raise DataError(f"{source} row {i + 2}: duplicate key (model={r.model}, ssp={r.ssp}, "
                        f"year={r.year}, month={r.month})")
    df["year"] = df["year"].astype(int)
    df["month"] = df["month"].astype(int)
    return df


@dataclass(frozen=True)
class MonthlyDeltas:
    d_tas: np.ndarray  # index 0 = January
    d_hurs: np.ndarray
    d_rsds: np.ndarray
    model: str = ""
    ssp: str = ""
    future_years: tuple = ()
    baseline_years: tuple = ()

    @classmethod
    def zero(cls) -> "MonthlyDeltas":
        z = np.zeros(12)
        return cls(z, z, z)

    @classmethod
    def constant(cls, d_tas: float = 0.0, d_hurs: float = 0.0, d_rsds: float = 0.0) -> "MonthlyDeltas":
        return cls(np.full(12, float(d_tas)), np.full(12, float(d_hurs)), np.full(12, float(d_rsds)))


def monthly_delta(ens: ClimateEnsemble, model: str, ssp: str, future_years, baseline_years=BASELINE_YEARS,
                  ) -> MonthlyDeltas:
    """Future-minus-baseline monthly climatology for one (model, scenario) run."""
    run = ens.records[(ens.records["model"] == model) & (ens.records["ssp"] == ssp)]

    def climatology(years):
        y0, y1 = years
        sel = run[(run["year"] >= y0) & (run["year"] <= y1)]
        have = set(zip(sel["year"], sel["month"]))
        gaps = [(y, m) for y in range(y0, y1 + 1) for m in range(1, 13) if (y, m) not in have]
        if gaps:
            shown = ", ".join(f"{y}-{m:02d}" for y, m in gaps[:12])
            more = f" (+{len(gaps) - 12} more)" if len(gaps) > 12 else ""
            raise DataError(f"{model}/{ssp}: missing (year, month) {shown}{more}")
        return sel.groupby("month")[["tas_c", "hurs_pct", "rsds_wm2"]].mean().sort_index()

    fut = climatology(future_years)
    base = climatology(baseline_years)
    diff = fut - base
    return MonthlyDeltas(diff["tas_c"].to_numpy(), diff["hurs_pct"].to_numpy(), diff["rsds_wm2"].to_numpy(),
                         model, ssp, tuple(future_years), tuple(baseline_years))


def apply_deltas(rows: pd.DataFrame, deltas: MonthlyDeltas) -> pd.DataFrame:
    """Perturb weather columns by the month's deltas and recompute the heat indices.

    ``rows`` needs ``t_air``, ``r_h``, ``sr`` and ``trip_month``; every other
    column is passed through untouched.
    """
    out = rows.copy()
    m = rows["trip_month"].to_numpy(int) - 1
    t_air = rows["t_air"].to_numpy(float) + deltas.d_tas[m]
    r_h = np.clip(rows["r_h"].to_numpy(float) + deltas.d_hurs[m], 0.0, 100.0)
    sr = np.maximum(0.0, rows["sr"].to_numpy(float) + deltas.d_rsds[m])
    _, _, t_wbgt = heat_indices(t_air, r_h, sr)
    # rows whose inputs did not move keep their stored index bit-for-bit
    same = ((t_air == rows["t_air"].to_numpy(float)) & (r_h == rows["r_h"].to_numpy(float))
            & (sr == rows["sr"].to_numpy(float)))
    if "t_wbgt" in rows.columns:
        t_wbgt = np.where(same, rows["t_wbgt"].to_numpy(float), t_wbgt)
    out["t_air"] = t_air
    out["r_h"] = r_h
    out["sr"] = sr
    out["t_wbgt"] = t_wbgt
    return out


def forecast_biomarkers(net: GaussianNetwork, rows: pd.DataFrame, targets: Sequence[str] = TARGETS,
                        joint=None) -> pd.DataFrame:
    """Predicted biomarkers per row given perturbed weather and unchanged activity/demographics."""
    evidence = rows[[c for c in net.nodes if c not in targets]]
    pred = predict(net, evidence, targets, joint=joint).mean
    return pred.rename(columns={t: f"pred_{t}" for t in targets})


@dataclass(frozen=True)
class ForecastCell:
    model: str
    ssp: str
    window: str
    table: pd.DataFrame


def forecast_cells(net: GaussianNetwork, rows: pd.DataFrame, ens: ClimateEnsemble, ssps: Sequence[str],
                   windows: Sequence[Sequence[int]] = FUTURE_WINDOWS, baseline_years=BASELINE_YEARS,
                   ) -> list[ForecastCell]:
    """One forecast table per (model, scenario, window), in sorted order."""
    joint = joint_gaussian(net)
    cells = []
    for ssp in ssps:
        for model in ens.members(ssp):
            for win in windows:
                deltas = monthly_delta(ens, model, ssp, win, baseline_years)
                pert = apply_deltas(rows, deltas)
                pred = forecast_biomarkers(net, pert, joint=joint)
                table = pd.concat([pert[["participant_id", "window_index", "t_air", "r_h", "t_wbgt"]], pred],
                                  axis=1)
                table.insert(0, "window", window_label(win))
                table.insert(0, "ssp", ssp)
                table.insert(0, "model", model)
                cells.append(ForecastCell(model, ssp, window_label(win), table[FORECAST_COLUMNS]))
    return cells


def write_forecasts(cells: Sequence[ForecastCell], path: Path) -> None:
    if cells:
        pd.concat([c.table for c in cells], ignore_index=True).to_csv(path, index=False)
    else:
        pd.DataFrame(columns=FORECAST_COLUMNS).to_csv(path, index=False)


def synthetic_ensemble(n_models: int = 18, ssps: Sequence[str] = ("ssp245",), years=(2015, 2100),
                       warming_per_decade=(0.15, 0.45), seed: int = 0, base_tas=None) -> pd.DataFrame:
    """Fixture ensemble with a seasonal cycle, per-model linear warming and small noise.

    Real CMIP6 extracts (regional monthly means over the study box) can be
    written in the same schema and used in its place.
    """
    rng = np.random.default_rng(seed)
    months = np.arange(1, 13)
    if base_tas is None:
        base_tas = 26.0 + 4.0 * np.sin((months - 4) / 12 * 2 * np.pi)
    base_hurs = 72.0 + 10.0 * np.sin((months - 7) / 12 * 2 * np.pi)
    base_rsds = 200.0 + 40.0 * np.sin((months - 3) / 12 * 2 * np.pi)
    scen_scale = {"ssp126": 0.5, "ssp245": 1.0, "ssp370": 1.5, "ssp585": 2.0}
    recs = []
    for k in range(n_models):
        name = f"model_{k:02d}"
        rate = rng.uniform(*warming_per_decade)
        for ssp in ssps:
            for y in range(years[0], years[1] + 1):
                warm = rate * scen_scale[ssp] * (y - 2024) / 10.0
                noise = rng.normal(0.0, 0.2, 12)
                for i, m in enumerate(months):
                    recs.append((name, ssp, y, int(m), float(base_tas[i] + warm + noise[i]),
                                 float(np.clip(base_hurs[i] - 0.5 * warm, 0, 100)),
                                 float(base_rsds[i] + rng.normal(0.0, 2.0))))
    return pd.DataFrame(recs, columns=ENSEMBLE_COLUMNS)
