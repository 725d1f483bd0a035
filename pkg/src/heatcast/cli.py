"""Command-line entry point: one subcommand per pipeline stage.

All stages share an output directory.  Each run writes
``manifests/<stage>.json`` with the manifest hash (config + seed +
versions) and a SHA-256 of every file it produced; JSON outputs also
carry the hash inline.  ``report`` refuses to combine stages whose
manifest hashes differ or whose files changed after they were written.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .climate import (
    FORECAST_COLUMNS, SSPS, forecast_cells, load_ensemble, synthetic_ensemble,
)
from .datamodel import (
    FEATURE_COLUMNS, ID_COLUMNS, TARGETS, DataError, SubjectSplit, iter_trip_dirs, read_context_table,
    read_feature_table, read_trip, split_subjects, write_context_table, write_feature_table,
)
from .features import build_feature_table
from .lgbn import (
    GaussianNetwork, evaluate, fit_linear_baseline, predict, search_candidates, select_candidate,
    select_model,
)
from .stats import DEFAULT_POLICY, correlation_network
from .survivability import SURVIVABILITY_COLUMNS, bootstrap_uncertainty, per_source_breakdown, present_day
from .synth import DEFAULT_NOISE, PlantedModel, generate_cohort, write_cohort

logger = logging.getLogger("heatcast")

STAGES = ("synth", "features", "correlate", "train", "forecast", "survive", "report")


class ConfigError(ValueError):
    pass


class ManifestMismatch(RuntimeError):
    pass


# --- configuration ----------------------------------------------------------

def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _words(text: str) -> tuple:
    return tuple(x for x in text.replace(",", " ").split())


def _windows(text: str) -> tuple:
    out = []
    for item in _words(text):
        a, _, b = item.partition("-")
        out.append((int(a), int(b)))
    return tuple(out)


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default text)
SCHEMA = {
    "run": {"seed": (int, "0")},
    "paths": {"data_dir": (str, ""), "ensemble": (str, "")},
    "synth": {
        "n_subjects": (int, "100"),
        "tskin_wbgt_standardized": (float, "0.8"),
        "eda_noise": (float, str(DEFAULT_NOISE["eda"])),
        "bvp_noise": (float, str(DEFAULT_NOISE["bvp"])),
        "ensemble_models": (int, "18"),
    },
    "features": {"rcc_mode": (str, "cumulative")},
    "split": {"ratios": (_floats, "0.5, 0.25, 0.25")},
    "correlate": {
        "r_threshold": (float, "0.1"),
        "p_threshold": (float, "0.05"),
        "permutations": (int, "0"),
    },
    "train": {
        "lambda1": (float, "0.1"),
        "omegas": (_floats, "0.05, 0.1, 0.2"),
        "max_iters": (int, "1000"),
        "forbid_into_demographics": (_bool, "false"),
    },
    "climate": {
        "ssps": (_words, ", ".join(SSPS)),
        "windows": (_windows, "2026-2030, 2031-2040, 2041-2050, 2051-2060, 2061-2070, 2071-2080, "
                              "2081-2090, 2091-2100"),
        "baseline": (_windows, "2023-2025"),
    },
    "survive": {
        "ssps": (_words, "ssp245"),
        "bootstrap": (int, "200"),
        "wbgt_threshold": (float, "31.1"),
        "tskin_threshold": (float, "35.0"),
    },
}


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value
    raw: dict  # section -> key -> text as given

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]


def load_config(path: str | None, seed: int | None = None) -> RunConfig:
    """Defaults overlaid with an INI file; unknown sections or keys are errors."""
    raw = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, text in cp.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                raw[section][key] = text
    if seed is not None:
        raw["run"]["seed"] = str(seed)
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, _) in keys.items():
            try:
                values[section][key] = parse(raw[section][key])
            except ValueError as e:
                raise ConfigError(f"bad value for {section}.{key}: {e}") from e
    _check(values)
    return RunConfig(values, raw)


def _check(v: dict) -> None:
    if v["run"]["seed"] < 0 or v["run"]["seed"] >= 2 ** 64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    if v["synth"]["n_subjects"] < 4:
        raise ConfigError("synth.n_subjects must be at least 4")
    if v["features"]["rcc_mode"] not in ("cumulative", "window"):
        raise ConfigError("features.rcc_mode must be 'cumulative' or 'window'")
    r = v["split"]["ratios"]
    if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1) > 1e-9:
        raise ConfigError("split.ratios must be three positive numbers summing to 1")
    if v["survive"]["bootstrap"] < 2:
        raise ConfigError("survive.bootstrap must be at least 2")
    for key in ("ssps",):
        for sec in ("climate", "survive"):
            bad = [s for s in v[sec][key] if s not in SSPS]
            if bad:
                raise ConfigError(f"{sec}.{key}: unknown scenario(s) {', '.join(bad)}")
    if not v["train"]["omegas"]:
        raise ConfigError("train.omegas must not be empty")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def versions() -> dict:
    return {"heatcast": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pd.__version__, "python": platform.python_version()}


def manifest_hash(cfg: RunConfig) -> str:
    # paths are locations, not options; they stay out of the hash
    options = {s: k for s, k in cfg.values.items() if s != "paths"}
    return hashlib.sha256(_canonical({"config": options, "versions": versions()}).encode()).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- run context ------------------------------------------------------------

class Run:
    def __init__(self, cfg: RunConfig, out: Path, jobs: int):
        self.cfg = cfg
        self.out = Path(out)
        self.jobs = max(1, jobs)
        self.hash = manifest_hash(cfg)
        self.outputs: list[Path] = []

    @property
    def data_dir(self) -> Path:
        p = self.cfg["paths"]["data_dir"]
        return Path(p) if p else self.out / "cohort"

    @property
    def ensemble_path(self) -> Path:
        p = self.cfg["paths"]["ensemble"]
        return Path(p) if p else self.out / "ensemble.csv"

    def path(self, name: str) -> Path:
        return self.out / name

    def need(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise FileNotFoundError(f"{p} not found; run the stage that produces it first")
        return p

    def wrote(self, *paths: Path) -> None:
        self.outputs.extend(Path(p) for p in paths)

    def write_json(self, name: str, doc: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps({**doc, "manifest_hash": self.hash}, indent=2, sort_keys=False) + "\n")
        self.wrote(p)
        return p

    def write_manifest(self, stage: str) -> Path:
        d = self.out / "manifests"
        d.mkdir(parents=True, exist_ok=True)
        outputs = {}
        for p in self.outputs:
            try:
                key = p.relative_to(self.out).as_posix()
            except ValueError:
                key = str(p)
            outputs[key] = _sha256(p)
        doc = {
            "stage": stage,
            "manifest_hash": self.hash,
            "seed": self.cfg.seed,
            "config": self.cfg.values,
            "versions": versions(),
            "outputs": outputs,
        }
        path = d / f"{stage}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return path


def _load_tables(run: Run) -> pd.DataFrame:
    table = read_feature_table(run.need("features.csv"))
    ctx = read_context_table(run.need("context.csv"))
    merged = table.merge(ctx, on=list(ID_COLUMNS), how="left", validate="one_to_one")
    if merged[["sr", "trip_month", "season"]].isna().any().any():
        raise DataError("context.csv does not cover every feature row")
    return merged


def _load_split(run: Run) -> SubjectSplit:
    return SubjectSplit.from_dict(json.loads(run.need("split.json").read_text()))


def _subset(table: pd.DataFrame, ids) -> pd.DataFrame:
    return table[table["participant_id"].isin(set(ids))].reset_index(drop=True)


# --- stages -----------------------------------------------------------------

def stage_synth(run: Run) -> None:
    c = run.cfg["synth"]
    noise = {**DEFAULT_NOISE, "eda": c["eda_noise"], "bvp": c["bvp_noise"]}
    planted = PlantedModel(tskin_wbgt_standardized=c["tskin_wbgt_standardized"], noise=noise)
    cohort = generate_cohort(c["n_subjects"], planted, seed=run.cfg.seed)
    root = run.data_dir
    dirs = write_cohort(cohort, root, jobs=run.jobs)
    run.wrote(*(d / "ground_truth.json" for d in dirs), root / "planted_model.json")
    ens = synthetic_ensemble(c["ensemble_models"], run.cfg["climate"]["ssps"], seed=run.cfg.seed)
    ens.to_csv(run.ensemble_path, index=False)
    run.wrote(run.ensemble_path)
    logger.info("wrote %d trips to %s", len(dirs), root)


def stage_features(run: Run) -> None:
    dirs = iter_trip_dirs(run.data_dir)
    if not dirs:
        raise DataError(f"no trips under {run.data_dir}")
    trips = [read_trip(d) for d in dirs]
    table = build_feature_table(trips, run.cfg["features"]["rcc_mode"], jobs=run.jobs)
    if table.empty:
        raise DataError("no feature windows survived")
    write_feature_table(table, run.path("features.csv"))
    write_context_table(table, run.path("context.csv"))
    run.wrote(run.path("features.csv"), run.path("context.csv"))
    logger.info("%d windows from %d trips", len(table), len(trips))


def stage_correlate(run: Run) -> None:
    c = run.cfg["correlate"]
    table = _load_tables(run)
    cols = list(FEATURE_COLUMNS) + ["season"]
    net = correlation_network(table[cols], DEFAULT_POLICY, c["r_threshold"], c["p_threshold"],
                              c["permutations"], run.cfg.seed)
    net.write(run.out, extra={"manifest_hash": run.hash})
    run.wrote(run.path("correlations.csv"), run.path("network.json"))


def stage_train(run: Run) -> None:
    c = run.cfg["train"]
    table = _load_tables(run)
    ids = sorted(table["participant_id"].unique())
    split = split_subjects(ids, run.cfg["split"]["ratios"], seed=run.cfg.seed)
    run.write_json("split.json", split.to_dict())
    train, valid, test = (_subset(table, s) for s in (split.train_ids, split.valid_ids, split.test_ids))

    candidates = search_candidates(train, valid, FEATURE_COLUMNS, c["omegas"], c["lambda1"], c["max_iters"],
                                   run.cfg.seed, c["forbid_into_demographics"])
    best = select_candidate(candidates)
    net = select_model(candidates, pd.concat([train, valid], ignore_index=True), seed=run.cfg.seed)
    net.save(run.path("model.json"), extra={"manifest_hash": run.hash})
    run.wrote(run.path("model.json"))

    rows = [(cand.provenance, len(cand.structure.edges), t, cand.nmae[t], cand is best)
            for cand in candidates for t in TARGETS]
    pd.DataFrame(rows, columns=["candidate", "n_edges", "target", "valid_nmae", "selected"]).to_csv(
        run.path("candidates.csv"), index=False)

    evidence = test[[n for n in net.nodes if n not in TARGETS]]
    pred = predict(net, evidence, TARGETS).mean
    fitset = pd.concat([train, valid], ignore_index=True)
    metrics = []
    for t in TARGETS:
        m = evaluate(pred[t], test[t])
        metrics.append((f"lgbn:{net.provenance}", t, m.mae, m.nmae, m.r))
    for t in TARGETS:
        base = fit_linear_baseline(fitset, t, [f for f in FEATURE_COLUMNS if f not in TARGETS])
        m = evaluate(base.predict(test), test[t])
        metrics.append(("linear", t, m.mae, m.nmae, m.r))
    pd.DataFrame(metrics, columns=["model", "target", "mae", "nmae", "r"]).to_csv(
        run.path("metrics.csv"), index=False)
    run.wrote(run.path("candidates.csv"), run.path("metrics.csv"))
    logger.info("selected %s (%d edges)", net.provenance, len(net.structure.edges))


def _load_model(run: Run) -> GaussianNetwork:
    path = run.need("model.json")
    doc = json.loads(path.read_text())
    if doc.get("manifest_hash") != run.hash:
        raise ManifestMismatch(f"{path} was produced under a different manifest")
    return GaussianNetwork.from_dict(doc)


def stage_forecast(run: Run) -> None:
    cl = run.cfg["climate"]
    net = _load_model(run)
    rows = _load_tables(run)
    ens = load_ensemble(run.ensemble_path)
    cells = forecast_cells(net, rows, ens, cl["ssps"], cl["windows"], cl["baseline"][0])
    out = run.path("forecasts.csv")
    frame = (pd.concat([c.table for c in cells], ignore_index=True) if cells
             else pd.DataFrame(columns=FORECAST_COLUMNS))
    frame.to_csv(out, index=False)
    run.wrote(out)


def stage_survive(run: Run) -> None:
    s = run.cfg["survive"]
    cl = run.cfg["climate"]
    net = _load_model(run)
    table = _load_tables(run)
    split = _load_split(run)
    ens = load_ensemble(run.ensemble_path)
    criteria = {"wbgt_gt_31_1": ("t_wbgt", s["wbgt_threshold"]),
                "tskin_gt_35": ("pred_t_skin", s["tskin_threshold"])}
    train = _subset(table, split.train_ids)
    summaries, breakdowns = [], []
    for k, ssp in enumerate(s["ssps"]):
        res = bootstrap_uncertainty(table, net.structure, train, ens, ssp, cl["windows"], s["bootstrap"],
                                    run.cfg.seed, cl["baseline"][0], include_present=(k == 0),
                                    jobs=run.jobs, criteria=criteria)
        summaries.append(res.summary)
        b = per_source_breakdown(res)
        b.insert(0, "ssp", ssp)
        breakdowns.append(b)
    summary = pd.concat(summaries, ignore_index=True)[SURVIVABILITY_COLUMNS]
    summary.to_csv(run.path("survivability.csv"), index=False)
    pd.concat(breakdowns, ignore_index=True).to_csv(run.path("uncertainty_sources.csv"), index=False)
    present = present_day(table, net)
    present.to_csv(run.path("present_day.csv"), index=False)
    run.wrote(run.path("survivability.csv"), run.path("uncertainty_sources.csv"), run.path("present_day.csv"))


def _verify_manifests(run: Run) -> dict:
    d = run.out / "manifests"
    found = {}
    for stage in STAGES[:-1]:
        p = d / f"{stage}.json"
        if p.exists():
            found[stage] = json.loads(p.read_text())
    if not found:
        raise ManifestMismatch(f"no stage manifests under {d}")
    for stage, doc in found.items():
        if doc["manifest_hash"] != run.hash:
            raise ManifestMismatch(f"stage {stage} ran under manifest {doc['manifest_hash'][:12]}, "
                                   f"current is {run.hash[:12]}")
        for name, digest in doc["outputs"].items():
            p = Path(name) if Path(name).is_absolute() else run.out / name
            if not p.exists() or _sha256(p) != digest:
                raise ManifestMismatch(f"{name} changed since stage {stage} wrote it")
    return found


def stage_report(run: Run) -> None:
    found = _verify_manifests(run)
    doc: dict = {"stages": sorted(found), "seed": run.cfg.seed, "versions": versions()}
    if run.path("network.json").exists():
        net = json.loads(run.path("network.json").read_text())
        doc["correlation_network"] = {"n_edges": len(net["edges"]), "family_size": net["metadata"]["family_size"]}
    if run.path("model.json").exists():
        model = json.loads(run.path("model.json").read_text())
        doc["model"] = {"provenance": model["provenance"], "n_edges": len(model["edges"])}
    if run.path("metrics.csv").exists():
        doc["metrics"] = pd.read_csv(run.path("metrics.csv")).to_dict(orient="records")
    if run.path("survivability.csv").exists():
        surv = pd.read_csv(run.path("survivability.csv"))
        doc["survivability"] = surv.to_dict(orient="records")
        plot = surv[["criterion", "ssp", "window", "pct_participants_mean", "pct_participants_std"]].copy()
        plot["lower"] = plot["pct_participants_mean"] - plot["pct_participants_std"]
        plot["upper"] = plot["pct_participants_mean"] + plot["pct_participants_std"]
        plot.to_csv(run.path("plot_exposure.csv"), index=False)
        run.wrote(run.path("plot_exposure.csv"))
    if run.path("forecasts.csv").exists():
        fc = pd.read_csv(run.path("forecasts.csv"))
        cols = [c for c in FORECAST_COLUMNS if c.startswith("pred_")] + ["t_wbgt"]
        g = fc.groupby(["ssp", "window", "model"], sort=True)[cols].mean().reset_index()
        agg = g.groupby(["ssp", "window"], sort=True)[cols].agg(["mean", "std"])
        agg.columns = [f"{a}_{b}" for a, b in agg.columns]
        agg.reset_index().to_csv(run.path("plot_forecast.csv"), index=False)
        run.wrote(run.path("plot_forecast.csv"))
    doc = json.loads(json.dumps(doc, default=float).replace("NaN", "null"))
    run.write_json("report.json", doc)


HANDLERS = {
    "synth": stage_synth, "features": stage_features, "correlate": stage_correlate, "train": stage_train,
    "forecast": stage_forecast, "survive": stage_survive, "report": stage_report,
}


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatcast", description="Heat-stress biomarker pipeline.")
    parser.add_argument("--version", action="version", version=f"heatcast {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--seed", type=int, metavar="U64", help="overrides run.seed")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    common.add_argument("--out", default="heatcast-out", metavar="DIR", help="run directory")
    sub = parser.add_subparsers(dest="stage", required=True)
    help_text = {
        "synth": "generate a synthetic cohort and climate ensemble",
        "features": "raw streams to one-minute feature table",
        "correlate": "Pearson network with BH control",
        "train": "structure search, selection and test metrics",
        "forecast": "climate-delta biomarker forecasts",
        "survive": "exposure tables with bootstrap uncertainty",
        "report": "aggregate JSON and plot-ready CSVs",
    }
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=help_text[stage])
    return parser


def _setup_logging() -> None:
    level = os.environ.get("HEATCAST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"heatcast: config error: {e}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("heatcast: config error: --jobs must be at least 1", file=sys.stderr)
        return 2
    run = Run(cfg, Path(args.out), args.jobs)
    run.out.mkdir(parents=True, exist_ok=True)
    try:
        HANDLERS[args.stage](run)
        run.write_manifest(args.stage)
    except Exception as e:  # noqa: BLE001 - every stage failure maps to exit 1
        logger.debug("stage failure", exc_info=True)
        print(f"heatcast: stage '{args.stage}' failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
