import json

import numpy as np
import pandas as pd
import pytest

from heatcast.datamodel import DataError, read_trip, validate_trip, write_trip
from heatcast.dsp import decompose_eda, extract_heart_rate, filter_bvp, filter_eda
from heatcast.features import build_feature_table
from heatcast.lgbn import evaluate, fit_linear_baseline
from heatcast.synth import (
    DEFAULT_NOISE, PlantedModel, generate_cohort, generate_trip, ground_truth, write_cohort,
)

from conftest import constant_spec

QUIET = {k: 0.0 for k in DEFAULT_NOISE}


def streams_bytes(trip):
    return {(p, c): (s.rate_hz, s.t0_us, s.values.tobytes()) for p, ch in trip.phases.items() for c, s in ch.items()}


def test_heart_rate_round_trip():
    trip = generate_trip(constant_spec(minutes=3, hr=90.0))
    bvp = trip.stream("ride", "bvp")
    hr = extract_heart_rate(filter_bvp(bvp))
    assert hr.hr_bpm.size >= 150
    np.testing.assert_allclose(hr.hr_bpm, 90.0, atol=1.0)


def test_varying_heart_rate_tracks_profile():
    spec = constant_spec(minutes=4)
    spec.hr_bpm = np.array([70.0, 100.0, 130.0, 160.0])
    hr = extract_heart_rate(filter_bvp(generate_trip(spec).stream("ride", "bvp")))
    for k, bpm in enumerate(spec.hr_bpm):
        inside = (hr.times >= 60 * k) & (hr.times + 10 <= 60 * (k + 1))
        np.testing.assert_allclose(hr.hr_bpm[inside], bpm, atol=2.0)


@pytest.mark.parametrize("eda_noise", [0.0, DEFAULT_NOISE["eda"]])
def test_scr_round_trip(eda_noise):
    times = (20.0, 50.0, 95.0, 140.0, 200.0, 250.0, 290.0)
    spec = constant_spec(minutes=6, scr_times=times, noise={**QUIET, "eda": eda_noise})
    dec = decompose_eda(filter_eda(generate_trip(spec).stream("ride", "eda")))
    assert dec.scr_times.size == 7
    np.testing.assert_allclose(dec.scr_times, times, atol=1.0)


def test_same_spec_is_byte_identical(tmp_path):
    spec = constant_spec(minutes=5, noise=dict(DEFAULT_NOISE), scr_times=(30.0,), seed=9)
    a, b = generate_trip(spec), generate_trip(spec)
    assert streams_bytes(a) == streams_bytes(b)
    da, db = write_trip(a, tmp_path / "a"), write_trip(b, tmp_path / "b")
    for f in sorted(da.rglob("*.csv")):
        assert f.read_bytes() == (db / f.relative_to(da)).read_bytes()


def test_noise_seed_changes_streams():
    a = generate_trip(constant_spec(noise=dict(DEFAULT_NOISE), seed=1))
    b = generate_trip(constant_spec(noise=dict(DEFAULT_NOISE), seed=2))
    assert streams_bytes(a) != streams_bytes(b)


def test_profile_length_mismatch():
    spec = constant_spec(minutes=6)
    spec.t_air = np.full(5, 30.0)
    with pytest.raises(DataError):
        generate_trip(spec)


def test_scr_outside_ride_rejected():
    with pytest.raises(DataError):
        generate_trip(constant_spec(minutes=5, scr_times=(400.0,)))


def test_solar_must_cover_trip():
    spec = constant_spec(minutes=10)
    spec.solar = ()
    with pytest.raises(DataError):
        generate_trip(spec)


def test_ground_truth_counts():
    truth = ground_truth(constant_spec(minutes=4, scr_times=(10, 20, 70, 200)))
    assert truth["scr_per_minute"] == [2, 1, 0, 1]
    assert len(truth["t_wbgt"]) == 4 and truth["hr_bpm"] == [90.0] * 4


# --- cohorts ----------------------------------------------------------------------

def test_cohort_needs_four_subjects():
    with pytest.raises(DataError):
        generate_cohort(3)


def test_every_trip_validates():
    cohort = generate_cohort(8, seed=3)
    for trip in cohort.trips():
        assert validate_trip(trip).ok, validate_trip(trip).violations


def test_cohort_deterministic_and_seed_dependent():
    a, b, c = generate_cohort(6, seed=1), generate_cohort(6, seed=1), generate_cohort(6, seed=2)
    assert json.dumps(a.truths) == json.dumps(b.truths)
    assert json.dumps(a.truths) != json.dumps(c.truths)
    assert [set(t) for t in a.truths] == [set(t) for t in c.truths]


def test_two_seeds_same_schema():
    fa = build_feature_table(generate_cohort(4, seed=10).trips())
    fb = build_feature_table(generate_cohort(4, seed=11).trips())
    assert list(fa.columns) == list(fb.columns)
    assert not fa["t_wbgt"].equals(fb["t_wbgt"])


def test_demographics_follow_configured_ranges():
    specs = generate_cohort(300, seed=4).specs
    ages = np.array([s.demographics.age for s in specs])
    bmis = np.array([s.demographics.bmi for s in specs])
    assert abs(ages.mean() - 48) < 3 and abs(bmis.mean() - 20.6) < 1
    seasons = pd.Series([s.demographics.season for s in specs]).value_counts(normalize=True)
    assert abs(seasons["summer"] - 0.51) < 0.1


def test_planted_standardized_coefficient():
    truths = generate_cohort(100, seed=0).truths
    wbgt = np.concatenate([t["t_wbgt"] for t in truths])
    tskin = np.concatenate([t["t_skin"] for t in truths])
    assert np.corrcoef(wbgt, tskin)[0, 1] == pytest.approx(0.8, abs=0.05)


def test_noise_free_cohort_baseline_is_exact():
    pm = PlantedModel(noise=dict(QUIET), hr_noise=0.0, scl_noise=0.0, tskin_wbgt_standardized=None)
    cohort = generate_cohort(6, pm, seed=5)
    truth = pd.concat([pd.DataFrame({k: t[k] for k in ("t_wbgt", "t_skin", "scl_level")}) for t in cohort.truths],
                      ignore_index=True)
    for target in ("t_skin", "scl_level"):
        model = fit_linear_baseline(truth, target, ["t_wbgt"])
        assert evaluate(model.predict(truth), truth[target]).mae < 1e-6
    # the same holds after the stream round trip for skin temperature
    feats = build_feature_table(cohort.trips())
    model = fit_linear_baseline(feats, "t_skin", ["t_wbgt"])
    assert evaluate(model.predict(feats), feats["t_skin"]).mae < 1e-6


def test_write_cohort(tmp_path):
    cohort = generate_cohort(4, seed=6)
    dirs = write_cohort(cohort, tmp_path / "one")
    write_cohort(cohort, tmp_path / "two", jobs=2)
    assert [d.name for d in dirs] == ["P001", "P002", "P003", "P004"]
    for f in sorted((tmp_path / "one").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "two" / f.relative_to(tmp_path / "one")).read_bytes()
    truth = json.loads((dirs[0] / "ground_truth.json").read_text())
    assert truth == json.loads(json.dumps(cohort.truths[0]))
    assert json.loads((tmp_path / "one" / "planted_model.json").read_text())["tskin_wbgt"] == 0.35
    back = read_trip(dirs[0])
    assert validate_trip(back).ok and back.trip_month == cohort.specs[0].trip_month
