import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

import heatcast.survivability as surv
from heatcast.climate import ClimateEnsemble, MonthlyDeltas, apply_deltas, forecast_biomarkers, validate_ensemble
from heatcast.lgbn import DAG, fit_lgbn
from heatcast.survivability import (
    SURVIVABILITY_COLUMNS, bootstrap_uncertainty, classify_wbgt, exposure_metrics, per_source_breakdown,
    present_day, resample_subjects,
)

from conftest import NET_NODES, weather_rows

EDGES = frozenset({("t_air", "t_wbgt"), ("r_h", "t_wbgt"), ("sr", "t_wbgt"), ("t_wbgt", "t_skin"),
                   ("t_wbgt", "scl"), ("speed", "rcc"), ("age", "rcc")})
STRUCTURE = DAG(NET_NODES, EDGES)


def cohort_rows(n_participants=20, minutes=10, seed=0):
    df = weather_rows(n_participants * minutes, seed)
    df["participant_id"] = [f"P{i // minutes:03d}" for i in range(len(df))]
    df["window_index"] = np.arange(len(df)) % minutes
    df["trip_month"] = 6
    return df


def flat_ensemble(steps=(0.0,), years=range(2023, 2031)):
    """One member per step; each warms by its step from 2026 on."""
    recs = [(f"m{k}", "ssp245", y, mo, 28.0 + step * (y >= 2026), 70.0, 200.0)
            for k, step in enumerate(steps) for y in years for mo in range(1, 13)]
    return ClimateEnsemble(validate_ensemble(pd.DataFrame(
        recs, columns=["model", "ssp", "year", "month", "tas_c", "hurs_pct", "rsds_wm2"])))


def per_minute(values):
    """Rows for {participant: [minute values]}."""
    return pd.DataFrame([(p, v) for p, vs in values.items() for v in vs], columns=["participant_id", "x"])


# --- risk bands --------------------------------------------------------------------

@pytest.mark.parametrize("value,band", [
    (30.0, "moderate"), (33.0, "extreme"), (31.1, "high"), (25.0, "no_stress"), (27.8, "mild"), (29.39, "mild"),
])
def test_classify(value, band):
    assert classify_wbgt(value).name == band


def test_classify_rejects_non_finite():
    with pytest.raises(ValueError):
        classify_wbgt(math.nan)


@given(st.floats(-20, 60), st.floats(0, 20))
def test_classify_monotone(t, d):
    assert classify_wbgt(t + d).severity >= classify_wbgt(t).severity


# --- exposure -----------------------------------------------------------------------

def test_four_participant_oracle():
    rows = per_minute({"a": [40] * 5 + [20] * 5, "b": [20] * 10, "c": [20] * 10, "d": [20] * 10})
    assert exposure_metrics(rows, "x", 31.1).as_tuple() == (25.0, 5.0, 50.0)


def test_nobody_exposed():
    s = exposure_metrics(per_minute({"a": [1, 2], "b": [3]}), "x", 10)
    assert s.pct_participants == 0 and math.isnan(s.mean_duration_min) and math.isnan(s.mean_pct_of_trip)


def test_everyone_always_exposed():
    s = exposure_metrics(per_minute({"a": [50] * 7, "b": [50] * 7}), "x", 10)
    assert s.as_tuple() == (100.0, 7.0, 100.0)


def test_threshold_is_strict():
    assert exposure_metrics(per_minute({"a": [31.1, 31.1]}), "x", 31.1).pct_participants == 0


def test_empty_rows_rejected():
    with pytest.raises(ValueError):
        exposure_metrics(per_minute({}), "x", 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_exposure_order_invariant(seed):
    rng = np.random.default_rng(seed)
    rows = pd.DataFrame({"participant_id": rng.integers(0, 8, 80), "x": rng.normal(30, 3, 80)})
    base = exposure_metrics(rows, "x", 31.0).as_tuple()
    shuffled = rows.sample(frac=1, random_state=int(rng.integers(1 << 30))).reset_index(drop=True)
    np.testing.assert_array_equal(exposure_metrics(shuffled, "x", 31.0).as_tuple(), base)


def test_threshold_monotonicity_on_random_cohorts():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        rows = pd.DataFrame({"participant_id": rng.integers(0, 10, 150), "x": rng.normal(31, 2, 150)})
        thresholds = np.sort(rng.uniform(26, 36, 6))
        pcts, totals = [], []
        minutes_prev = None
        for thr in thresholds:
            s = exposure_metrics(rows, "x", thr)
            pcts.append(s.pct_participants)
            minutes = (rows["x"] > thr).groupby(rows["participant_id"]).sum()
            totals.append(minutes.mean())  # duration averaged over every participant
            if minutes_prev is not None:
                assert (minutes <= minutes_prev).all()
            minutes_prev = minutes
        assert np.all(np.diff(pcts) <= 0) and np.all(np.diff(totals) <= 0)


# --- bootstrap ------------------------------------------------------------------------

def test_resampling_is_seeded_per_draw():
    ids = [f"P{i}" for i in range(10)]
    assert resample_subjects(ids, 3, 0) == resample_subjects(ids, 3, 0)
    assert resample_subjects(ids, 3, 0) != resample_subjects(ids, 3, 1)
    assert set(resample_subjects(ids, 3, 0)) <= set(ids)


def test_two_draw_zero_delta_identity():
    rows = cohort_rows(20, 10, 1)
    train = rows.iloc[: 12 * 10]
    thr = float(np.median(forecast_biomarkers(fit_lgbn(STRUCTURE, train), rows)["pred_t_skin"]))
    criteria = {"tskin": ("pred_t_skin", thr)}
    res = bootstrap_uncertainty(rows, STRUCTURE, train, flat_ensemble(), "ssp245", windows=[(2026, 2030)],
                                B=2, seed=7, criteria=criteria)
    refits = []
    for b in range(2):
        ids = resample_subjects(sorted(train["participant_id"].unique()), 7, b)
        sample = pd.concat([train[train.participant_id == i] for i in ids], ignore_index=True)
        pred = forecast_biomarkers(fit_lgbn(STRUCTURE, sample), rows)
        refits.append(exposure_metrics(pd.concat([rows[["participant_id"]], pred], axis=1), "pred_t_skin", thr))
    future = res.summary[res.summary["window"] == "2026-2030"].iloc[0]
    present = res.summary[res.summary["ssp"] == "present"].iloc[0]
    a, b = (r.pct_participants for r in refits)
    assert future["pct_participants_mean"] == pytest.approx((a + b) / 2, abs=1e-12)
    assert future["pct_participants_std"] == pytest.approx(abs(a - b) / 2, abs=1e-12)
    a, b = (r.mean_pct_of_trip for r in refits)
    assert future["pct_trip_mean"] == pytest.approx((a + b) / 2, abs=1e-12)
    assert future["pct_trip_std"] == pytest.approx(abs(a - b) / 2, abs=1e-12)
    for c in SURVIVABILITY_COLUMNS[3:]:
        assert future[c] == pytest.approx(present[c], abs=1e-12, nan_ok=True)


def test_warming_members_keep_their_order():
    rows = cohort_rows(30, 10, 2)
    train = rows.iloc[: 20 * 10]
    res = bootstrap_uncertainty(rows, STRUCTURE, train, flat_ensemble((1.0, 2.0, 3.0)), "ssp245",
                                windows=[(2026, 2030)], B=4, seed=1,
                                criteria={"tskin": ("pred_t_skin", 35.5), "wbgt": ("t_wbgt", 33.0)})
    cells = res.cells[res.cells["member"] != "present"]
    for crit in ("tskin", "wbgt"):
        by_member = cells[cells.criterion == crit].groupby("member")["pct_participants"].mean()
        assert list(by_member.index) == ["m0", "m1", "m2"]
        assert np.all(np.diff(by_member.to_numpy()) >= 0) and by_member.iloc[2] > by_member.iloc[0], crit
    breakdown = per_source_breakdown(res)
    assert list(breakdown.columns) == ["criterion", "window", "metric", "ensemble_std", "bootstrap_std"]


def test_bootstrap_deterministic_across_jobs():
    rows = cohort_rows(12, 8, 3)
    args = (rows, STRUCTURE, rows, flat_ensemble((0.5, 1.5)), "ssp245")
    kw = dict(windows=[(2026, 2030)], B=3, seed=11)
    first = bootstrap_uncertainty(*args, **kw).summary
    pd.testing.assert_frame_equal(first, bootstrap_uncertainty(*args, **kw).summary)
    pd.testing.assert_frame_equal(first, bootstrap_uncertainty(*args, jobs=2, **kw).summary)
    assert list(first.columns) == SURVIVABILITY_COLUMNS


def test_identical_non_representable_cells_have_zero_std():
    assert surv._moments([13.545454545454545] * 11) == (13.545454545454545, 0.0)


def test_identical_cells_have_zero_std():
    rows = cohort_rows(10, 10, 4)
    rows.loc[rows.participant_id.isin(["P000", "P001"]), "t_wbgt"] = 33.0
    res = bootstrap_uncertainty(rows, STRUCTURE, rows, flat_ensemble((0.0, 0.0)), "ssp245",
                                windows=[(2026, 2030)], B=3, seed=0, criteria={"wbgt": ("t_wbgt", 31.1)})
    for c in ("pct_participants_std", "duration_min_std", "pct_trip_std"):
        np.testing.assert_array_equal(res.summary[c], 0.0)


def _failing_fit(bad_draws):
    calls = {"n": 0}
    real = surv.fit_lgbn

    def fit(structure, sample):
        calls["n"] += 1
        if calls["n"] - 1 in bad_draws:
            raise np.linalg.LinAlgError("synthetic failure")
        return real(structure, sample)
    return fit


def test_few_failures_tolerated(monkeypatch):
    monkeypatch.setattr(surv, "fit_lgbn", _failing_fit({4}))
    rows = cohort_rows(8, 5, 5)
    res = bootstrap_uncertainty(rows, STRUCTURE, rows, flat_ensemble(), "ssp245", windows=[(2026, 2030)], B=10)
    assert res.failures == 1 and res.cells["draw"].nunique() == 9


def test_too_many_failures_fatal(monkeypatch):
    monkeypatch.setattr(surv, "fit_lgbn", _failing_fit({1, 2}))
    rows = cohort_rows(8, 5, 5)
    with pytest.raises(RuntimeError, match="2 of 10"):
        bootstrap_uncertainty(rows, STRUCTURE, rows, flat_ensemble(), "ssp245", windows=[(2026, 2030)], B=10)


def test_bootstrap_needs_two_draws():
    rows = cohort_rows(4, 5, 6)
    with pytest.raises(ValueError):
        bootstrap_uncertainty(rows, STRUCTURE, rows, flat_ensemble(), "ssp245", B=1)


def test_present_day_reports_measured_and_predicted():
    rows = cohort_rows(10, 10, 7)
    out = present_day(rows, fit_lgbn(STRUCTURE, rows))
    assert list(zip(out.criterion, out.source)) == [
        ("wbgt_gt_31_1", "measured"), ("tskin_gt_35", "measured"), ("tskin_gt_35", "predicted")]
    assert out["pct_participants"].between(0, 100).all()
    assert out.iloc[0]["pct_participants"] == exposure_metrics(rows, "t_wbgt", 31.1).pct_participants


def test_zero_delta_keeps_wbgt_exposure():
    rows = cohort_rows(10, 10, 8)
    pert = apply_deltas(rows, MonthlyDeltas.zero())
    assert exposure_metrics(pert, "t_wbgt", 31.1) == exposure_metrics(rows, "t_wbgt", 31.1)
