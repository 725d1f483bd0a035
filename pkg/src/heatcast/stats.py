"""Pearson correlation network with Benjamini-Hochberg control."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats as sps

from .datamodel import ACTIVITY, DEMOGRAPHIC, SEASONS, TARGETS, WEATHER

logger = logging.getLogger(__name__)

R_THRESHOLD = 0.1
P_THRESHOLD = 0.05

CATEGORIES = {
    "physiological": TARGETS,
    "activity": ACTIVITY,
    "weather": WEATHER,
    "demographic": DEMOGRAPHIC,
    "season": tuple(f"season_{s}" for s in SEASONS),
}
# Physiological biomarkers against everything, as in the restricted network.
DEFAULT_POLICY = (
    ("physiological", "physiological"),
    ("physiological", "activity"),
    ("physiological", "season"),
    ("physiological", "weather"),
    ("physiological", "demographic"),
)


class DegenerateSeries(ValueError):
    pass


def pearson(x, y, permutations: int = 0, seed: int = 0) -> tuple[float, float]:
    """Product-moment correlation and its two-sided p-value.

    The p-value comes from the t-distribution with ``n - 2`` degrees of
    freedom, or from a label-permutation test when ``permutations > 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d series of equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    syy = np.dot(yc, yc)
    if sxx == 0 or syy == 0:
        raise DegenerateSeries("degenerate series")
    r = float(np.clip(np.dot(xc, yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    if permutations:
        rng = np.random.default_rng(seed)
        null = np.array([np.dot(xc, rng.permutation(yc)) for _ in range(permutations)])
        null /= np.sqrt(sxx * syy)
        p = (1 + np.count_nonzero(np.abs(null) >= abs(r) - 1e-12)) / (permutations + 1)
        return r, float(p)
    if abs(r) == 1.0:
        return r, 0.0
    df = n - 2
    t = r * np.sqrt(df / (1.0 - r * r))
    return r, float(2 * sps.t.sf(abs(t), df))


def bh_adjust(pvals) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(pvals, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * (m / np.arange(1, m + 1))  # factor >= 1, so rounding never drops below p
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adjusted, 1.0)
    return out


def season_indicators(season: pd.Series) -> pd.DataFrame:
    return pd.DataFrame({f"season_{s}": (season == s).astype(float) for s in SEASONS}, index=season.index)


def policy_pairs(columns, policy=DEFAULT_POLICY) -> list[tuple[str, str]]:
    """Unordered feature pairs allowed by ``policy``, in a fixed order."""
    present = set(columns)
    pairs = []
    seen = set()
    for cat_a, cat_b in policy:
        for a in CATEGORIES[cat_a]:
            for b in CATEGORIES[cat_b]:
                if a == b or a not in present or b not in present:
                    continue
                key = frozenset((a, b))
                if key in seen:
                    continue
                seen.add(key)
                pairs.append((a, b))
    return pairs


@dataclass
class CorrelationNetwork:
    nodes: list[str]
    edges: list[tuple[str, str, float, float]]
    matrix: pd.DataFrame  # one row per tested pair
    pair_policy: tuple = DEFAULT_POLICY
    metadata: dict = field(default_factory=dict)

    def edge_set(self) -> set[frozenset]:
        return {frozenset((a, b)) for a, b, _, _ in self.edges}

    def write(self, out_dir: Path, extra: dict | None = None) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.matrix.to_csv(out_dir / "correlations.csv", index=False)
        doc = {
            "nodes": self.nodes,
            "edges": [{"a": a, "b": b, "r": r, "p_adj": p} for a, b, r, p in self.edges],
            "metadata": self.metadata,
            **(extra or {}),
        }
        (out_dir / "network.json").write_text(json.dumps(doc, indent=2) + "\n")


def correlation_network(table: pd.DataFrame, policy=DEFAULT_POLICY,
                        r_threshold: float = R_THRESHOLD, p_threshold: float = P_THRESHOLD,
                        permutations: int = 0, seed: int = 0) -> CorrelationNetwork:
    """Test every policy-allowed pair and keep edges with |r| > 0.1 and adjusted p < 0.05.

    A ``season`` column, when present, is expanded to one-hot indicators.
    Adjustment runs over exactly the tested pair family.
    """
    if len(table) < 3:
        raise ValueError("need at least 3 rows")
    data = table
    if "season" in table.columns:
        data = pd.concat([table.drop(columns="season"), season_indicators(table["season"])], axis=1)
    records = []
    for a, b in policy_pairs(data.columns, policy):
        try:
            r, p = pearson(data[a].to_numpy(float), data[b].to_numpy(float), permutations, seed)
        except DegenerateSeries:
            logger.warning("constant column in pair (%s, %s); skipped", a, b)
            continue
        records.append((a, b, r, p))
    matrix = pd.DataFrame(records, columns=["a", "b", "r", "p"])
    matrix["p_adj"] = bh_adjust(matrix["p"].to_numpy()) if len(matrix) else []
    matrix["retained"] = (matrix["r"].abs() > r_threshold) & (matrix["p_adj"] < p_threshold)
    matrix.insert(0, "pair", matrix["a"] + "~" + matrix["b"])
    kept = matrix[matrix["retained"]]
    edges = [(a, b, float(r), float(p)) for a, b, r, p in kept[["a", "b", "r", "p_adj"]].itertuples(index=False)]
    nodes = sorted(set(matrix["a"]) | set(matrix["b"]))
    meta = {
        "family_size": int(len(matrix)),
        "p_value": "permutation" if permutations else "t-distribution",
        "significance_uses": "bh_adjusted",
        "r_threshold": r_threshold,
        "p_threshold": p_threshold,
    }
    return CorrelationNetwork(nodes, edges, matrix, tuple(policy), meta)
