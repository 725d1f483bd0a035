import json
import shutil
import subprocess
import sys

import pandas as pd
import pytest

from heatcast.cli import ConfigError, load_config, main, manifest_hash
from heatcast.survivability import SURVIVABILITY_COLUMNS

# eight subjects leave too few training participants for a full-rank design
pytestmark = pytest.mark.filterwarnings("ignore::heatcast.lgbn.SingularDesignWarning")

SMALL = """
[run]
seed = 3

[synth]
n_subjects = 8
ensemble_models = 2

[climate]
ssps = ssp245
windows = 2041-2050, 2091-2100

[survive]
bootstrap = 3
"""

STAGES = ("synth", "features", "correlate", "train", "forecast", "survive", "report")


def run_stages(out, config, stages=STAGES, jobs=1):
    for stage in stages:
        code = main([stage, "--config", str(config), "--out", str(out), "--jobs", str(jobs)])
        assert code == 0, stage


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.ini"
    p.write_text(SMALL)
    return p


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, config):
    out = tmp_path_factory.mktemp("run")
    run_stages(out, config)
    return out


def test_smoke_outputs(full_run):
    for name in ("features.csv", "context.csv", "correlations.csv", "network.json", "split.json", "model.json",
                 "metrics.csv", "candidates.csv", "forecasts.csv", "survivability.csv", "present_day.csv",
                 "report.json", "plot_exposure.csv", "plot_forecast.csv", "ensemble.csv"):
        assert (full_run / name).is_file(), name
    metrics = pd.read_csv(full_run / "metrics.csv")
    assert list(metrics.columns) == ["model", "target", "mae", "nmae", "r"]
    assert set(metrics["model"].str.split(":").str[0]) == {"lgbn", "linear"}
    surv = pd.read_csv(full_run / "survivability.csv")
    assert list(surv.columns) == SURVIVABILITY_COLUMNS
    assert set(surv["window"]) == {"2023-2025", "2041-2050", "2091-2100"}


def test_every_output_records_the_manifest_hash(full_run, config):
    h = manifest_hash(load_config(str(config)))
    for name in ("model.json", "network.json", "split.json", "report.json"):
        assert json.loads((full_run / name).read_text())["manifest_hash"] == h
    for stage in STAGES:
        doc = json.loads((full_run / "manifests" / f"{stage}.json").read_text())
        assert doc["manifest_hash"] == h and doc["seed"] == 3 and "numpy" in doc["versions"]


def test_rerun_is_byte_identical(full_run, config, tmp_path):
    run_stages(tmp_path, config, jobs=2)
    a, b = tree(full_run), tree(tmp_path)
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[train]\nlamda1 = 0.1\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "train.lamda1" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["[nope]\nx = 1\n", "[survive]\nbootstrap = 1\n", "[run]\nseed = abc\n",
                                  "[climate]\nssps = ssp999\n"])
def test_bad_config_exits_2(tmp_path, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert main(["features", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_defaults_need_no_file():
    cfg = load_config(None)
    assert cfg["train"]["omegas"] == (0.05, 0.1, 0.2) and cfg["survive"]["bootstrap"] == 200
    with pytest.raises(ConfigError):
        load_config("/nonexistent/heatcast.ini")


def test_missing_inputs_exit_1_with_stage(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 1
    assert "stage 'train' failed" in capsys.readouterr().err


def test_zero_delta_survive_matches_present(full_run, config, tmp_path):
    out = tmp_path / "run"
    shutil.copytree(full_run, out)
    ens = pd.read_csv(out / "ensemble.csv")
    base = ens[ens["year"].between(2023, 2025)].groupby(["model", "ssp", "month"])[
        ["tas_c", "hurs_pct", "rsds_wm2"]].mean()
    flat = ens.drop(columns=["tas_c", "hurs_pct", "rsds_wm2"]).join(base, on=["model", "ssp", "month"])
    flat.to_csv(out / "flat.csv", index=False)
    cfg = tmp_path / "flat.ini"
    cfg.write_text(SMALL + f"\n[paths]\nensemble = {out / 'flat.csv'}\n")
    assert main(["survive", "--config", str(cfg), "--out", str(out)]) == 0
    surv = pd.read_csv(out / "survivability.csv")
    present = surv[surv["ssp"] == "present"].drop(columns=["ssp", "window"]).reset_index(drop=True)
    for win in ("2041-2050", "2091-2100"):
        future = surv[surv["window"] == win].drop(columns=["ssp", "window"]).reset_index(drop=True)
        pd.testing.assert_frame_equal(future, present)


def test_report_refuses_other_manifest(full_run, tmp_path, capsys):
    out = tmp_path / "run"
    shutil.copytree(full_run, out)
    cfg = tmp_path / "other.ini"
    cfg.write_text(SMALL.replace("seed = 3", "seed = 4"))
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 1
    assert "ManifestMismatch" in capsys.readouterr().err
    assert main(["forecast", "--config", str(cfg), "--out", str(out)]) == 1


def test_report_refuses_modified_file(full_run, config, tmp_path, capsys):
    out = tmp_path / "run"
    shutil.copytree(full_run, out)
    with open(out / "metrics.csv", "a") as fh:
        fh.write("tampered,t_skin,0,0,0\n")
    assert main(["report", "--config", str(config), "--out", str(out)]) == 1
    assert "metrics.csv changed" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "heatcast", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("heatcast ")
