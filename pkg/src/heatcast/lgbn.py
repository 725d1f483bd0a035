"""Linear Gaussian Bayesian networks over the feature table.

Structure learning (greedy hill climbing on a Gaussian BIC, and the
continuous NOTEARS program), maximum-likelihood parameter fitting,
conditional-Gaussian prediction and validation-based model selection.
All structure learning and inference run on z-scored variables whose
statistics come from the training rows only.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.optimize as sopt

from .datamodel import DEMOGRAPHIC, FEATURE_COLUMNS, TARGETS

logger = logging.getLogger(__name__)

RIDGE_LAMBDA = 1e-6


class SingularDesignWarning(UserWarning):
    pass


class NotearsError(RuntimeError):
    pass


# --- graphs ---------------------------------------------------------------

@dataclass(frozen=True)
class DAG:
    nodes: tuple[str, ...]
    edges: frozenset  # of (parent, child)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset((str(a), str(b)) for a, b in self.edges))
        names = set(self.nodes)
        for a, b in self.edges:
            if a not in names or b not in names:
                raise ValueError(f"edge {a}->{b} references unknown node")
            if a == b:
                raise ValueError(f"self loop on {a}")

    @classmethod
    def empty(cls, nodes: Sequence[str]) -> "DAG":
        return cls(tuple(nodes), frozenset())

    def parents(self, node: str) -> list[str]:
        return [n for n in self.nodes if (n, node) in self.edges]

    def children(self, node: str) -> list[str]:
        return [n for n in self.nodes if (node, n) in self.edges]

    def topological_order(self) -> list[str]:
        """Kahn's algorithm, ties broken by node order; raises on cycles."""
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indeg[b] += 1
        order = []
        ready = [n for n in self.nodes if indeg[n] == 0]
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=self.nodes.index)
        if len(order) != len(self.nodes):
            raise ValueError("graph contains a cycle")
        return order

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
        except ValueError:
            return False
        return True

    def skeleton(self) -> set[frozenset]:
        return {frozenset(e) for e in self.edges}

    def has_path(self, src: str, dst: str) -> bool:
        stack, seen = [src], set()
        while stack:
            n = stack.pop()
            if n == dst:
                return True
            if n in seen:
                continue
            seen.add(n)
            stack.extend(c for a, c in self.edges if a == n)
        return False

    def with_edges(self, edges) -> "DAG":
        return DAG(self.nodes, frozenset(edges))

    def sorted_edges(self) -> list[tuple[str, str]]:
        idx = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self.edges, key=lambda e: (idx[e[0]], idx[e[1]]))


# --- scaling --------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: dict
    std: dict

    @classmethod
    def fit(cls, table: pd.DataFrame, nodes: Sequence[str]) -> "Standardizer":
        mean, std = {}, {}
        for n in nodes:
            x = table[n].to_numpy(float)
            mean[n] = float(x.mean())
            s = float(x.std())
            if s == 0:
                logger.warning("column %s is constant in training data; scale set to 1", n)
                s = 1.0
            std[n] = s
        return cls(mean, std)

    def transform(self, table: pd.DataFrame, nodes: Sequence[str]) -> np.ndarray:
        return np.column_stack([(table[n].to_numpy(float) - self.mean[n]) / self.std[n] for n in nodes])


def standardize(table: pd.DataFrame, nodes: Sequence[str] | None = None) -> pd.DataFrame:
    nodes = list(nodes or table.columns)
    sc = Standardizer.fit(table, nodes)
    return pd.DataFrame(sc.transform(table, nodes), columns=nodes, index=table.index)


# --- local regressions ----------------------------------------------------

def _ols(y: np.ndarray, X: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Intercept, coefficients and MLE residual variance of y on X."""
    n = y.size
    A = np.column_stack([np.ones(n), X]) if X.size else np.ones((n, 1))
    gram = A.T @ A
    rhs = A.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        warnings.warn("singular parent design; using ridge fallback", SingularDesignWarning, stacklevel=3)
        penalty = RIDGE_LAMBDA * np.eye(gram.shape[0])
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(gram + penalty, rhs)
    else:
        beta = np.linalg.solve(gram, rhs)
    resid = y - A @ beta
    var = float(resid @ resid / n)
    return float(beta[0]), beta[1:], var


def _local_loglik(var: float, n: int) -> float:
    var = max(var, 1e-300)
    return -0.5 * n * (math.log(2 * math.pi * var) + 1.0)


class _LocalScores:
    """Cached BIC terms of each (node, parent set) on one data matrix."""

    def __init__(self, X: np.ndarray, nodes: Sequence[str]):
        self.X = X
        self.n = X.shape[0]
        self.index = {n: i for i, n in enumerate(nodes)}
        self.cache: dict = {}

    def __call__(self, node: str, parents: Iterable[str]) -> float:
        key = (node, frozenset(parents))
        if key not in self.cache:
            cols = sorted(self.index[p] for p in key[1])
            _, _, var = _ols(self.X[:, self.index[node]], self.X[:, cols])
            k = len(cols) + 2  # coefficients, intercept, variance
            self.cache[key] = _local_loglik(var, self.n) - 0.5 * k * math.log(self.n)
        return self.cache[key]


def gaussian_bic(structure: DAG, table: pd.DataFrame) -> float:
    """Gaussian BIC of ``structure``: node log-likelihoods minus (k/2) log n."""
    nodes = list(structure.nodes)
    if len(table) < len(nodes) + 2:
        raise ValueError("need at least nodes + 2 rows")
    score = _LocalScores(table[nodes].to_numpy(float), nodes)
    return float(sum(score(n, structure.parents(n)) for n in nodes))


# --- hill climbing --------------------------------------------------------

def learn_structure_hillclimb(table: pd.DataFrame, max_iters: int = 1000, seed: int = 0,
                              forbidden: Iterable[tuple[str, str]] = (), nodes=None) -> DAG:
    """Greedy search over single-edge additions, removals and reversals.

    Each step takes the move with the largest BIC gain; the seed fixes the
    order in which equal gains are resolved.
    """
    nodes = list(nodes or table.columns)
    score = _LocalScores(table[nodes].to_numpy(float), nodes)
    forbidden = set(forbidden)
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in nodes for b in nodes if a != b]
    pairs = [pairs[i] for i in rng.permutation(len(pairs))]
    dag = DAG.empty(nodes)
    parents = {n: set() for n in nodes}

    for _ in range(max_iters):
        best_gain, best_move = 1e-9, None
        for a, b in pairs:
            if (a, b) in dag.edges:
                # remove a->b
                gain = score(b, parents[b] - {a}) - score(b, parents[b])
                if gain > best_gain:
                    best_gain, best_move = gain, ("remove", a, b)
                # reverse a->b into b->a
                if (b, a) not in forbidden and not _indirect_path(dag, a, b):
                    gain = (score(b, parents[b] - {a}) - score(b, parents[b])
                            + score(a, parents[a] | {b}) - score(a, parents[a]))
                    if gain > best_gain:
                        best_gain, best_move = gain, ("reverse", a, b)
            elif (b, a) not in dag.edges and (a, b) not in forbidden:
                if dag.has_path(b, a):
                    continue
                gain = score(b, parents[b] | {a}) - score(b, parents[b])
                if gain > best_gain:
                    best_gain, best_move = gain, ("add", a, b)
        if best_move is None:
            break
        op, a, b = best_move
        edges = set(dag.edges)
        if op == "add":
            edges.add((a, b))
            parents[b].add(a)
        elif op == "remove":
            edges.discard((a, b))
            parents[b].discard(a)
        else:
            edges.discard((a, b))
            parents[b].discard(a)
            edges.add((b, a))
            parents[a].add(b)
        dag = dag.with_edges(edges)
    return dag


def _indirect_path(dag: DAG, a: str, b: str) -> bool:
    """Whether ``a`` reaches ``b`` other than through the edge a->b itself."""
    stack = [c for x, c in dag.edges if x == a and c != b]
    seen = set()
    while stack:
        n = stack.pop()
        if n == b:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack.extend(c for x, c in dag.edges if x == n)
    return False


# --- NOTEARS --------------------------------------------------------------

@dataclass
class NotearsResult:
    W: np.ndarray
    h: float
    rho: float
    alpha: float
    outer_iterations: int
    nodes: tuple

    def dag(self, omega: float) -> DAG:
        return threshold_dag(self.W, self.nodes, omega)


def _acyclicity(W: np.ndarray) -> tuple[float, np.ndarray]:
    # trial steps of the line search can overflow; the optimizer backs off from them
    with np.errstate(over="ignore", invalid="ignore"):
        E = sla.expm(W * W)
    return float(np.trace(E) - W.shape[0]), E.T * W * 2


def notears_weights(X: np.ndarray, nodes: Sequence[str], lambda1: float = 0.1, max_iter: int = 100,
                    h_tol: float = 1e-8, rho_max: float = 1e16, forbidden=()) -> NotearsResult:
    """Weighted adjacency minimizing (1/2n)||X - XW||^2 + lambda1 |W|_1 with h(W) = 0.

    Augmented Lagrangian with dual ascent on ``alpha`` and a tenfold
    penalty increase whenever ``h`` fails to shrink by a factor of four.
    The inner problem is solved by L-BFGS-B on the positive/negative split
    of ``W``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    cov = X.T @ X / n
    forbidden = set(forbidden)
    bnds = []
    for i in range(d):
        for j in range(d):
            fixed = i == j or (nodes[i], nodes[j]) in forbidden
            bnds.append((0, 0) if fixed else (0, None))
    bounds = bnds + bnds

    def unpack(w):
        return (w[: d * d] - w[d * d:]).reshape(d, d)

    def objective(w, rho, alpha):
        W = unpack(w)
        M = np.eye(d) - W
        loss = 0.5 * np.trace(M.T @ cov @ M)
        g_loss = -cov @ M
        h, g_h = _acyclicity(W)
        obj = loss + 0.5 * rho * h * h + alpha * h + lambda1 * w.sum()
        g = g_loss + (rho * h + alpha) * g_h
        grad = np.concatenate([g.ravel() + lambda1, -g.ravel() + lambda1])
        return obj, grad

    w = np.zeros(2 * d * d)
    rho, alpha, h = 1.0, 0.0, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        while rho < rho_max:
            sol = sopt.minimize(objective, w, args=(rho, alpha), jac=True, method="L-BFGS-B",
                                bounds=bounds)
            w_new = sol.x
            h_new, _ = _acyclicity(unpack(w_new))
            if h_new > 0.25 * h:
                rho *= 10
            else:
                break
        if not np.all(np.isfinite(w_new)):
            raise NotearsError(f"NOTEARS diverged at outer iteration {it} (rho={rho:g}, alpha={alpha:g})")
        w, h = w_new, h_new
        alpha += rho * h
        if h <= h_tol or rho >= rho_max:
            break
    else:
        raise NotearsError(
            f"NOTEARS did not converge after {max_iter} outer iterations: h={h:.3e}, rho={rho:g}")
    return NotearsResult(unpack(w), float(h), rho, alpha, it, tuple(nodes))


def threshold_dag(W: np.ndarray, nodes: Sequence[str], omega: float) -> DAG:
    """Edges with |w| > omega; weakest cycle edges are dropped until acyclic."""
    d = len(nodes)
    weights = {(nodes[i], nodes[j]): abs(W[i, j]) for i in range(d) for j in range(d)
               if i != j and abs(W[i, j]) > omega}
    dag = DAG(tuple(nodes), frozenset(weights))
    while not dag.is_acyclic():
        cycle = _find_cycle(dag)
        weakest = min(cycle, key=lambda e: (weights[e], e))
        logger.warning("thresholded NOTEARS graph is cyclic; pruning %s->%s", *weakest)
        dag = dag.with_edges(dag.edges - {weakest})
    return dag


def _find_cycle(dag: DAG) -> list[tuple[str, str]]:
    color = {n: 0 for n in dag.nodes}
    stack: list[str] = []

    def visit(n):
        color[n] = 1
        stack.append(n)
        for c in dag.children(n):
            if color[c] == 1:
                path = stack[stack.index(c):] + [c]
                return list(zip(path[:-1], path[1:]))
            if color[c] == 0:
                found = visit(c)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in dag.nodes:
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return []


def learn_structure_notears(table: pd.DataFrame, lambda1: float = 0.1, omega: float = 0.1,
                            **kwargs) -> DAG:
    nodes = list(table.columns)
    return notears_weights(table.to_numpy(float), nodes, lambda1, **kwargs).dag(omega)


# --- parameters and inference ---------------------------------------------

@dataclass(frozen=True)
class NodeParams:
    intercept: float
    coefficients: dict  # parent -> weight
    residual_variance: float


@dataclass
class GaussianNetwork:
    """Linear Gaussian network whose parameters live on the standardized scale."""

    structure: DAG
    params: dict  # node -> NodeParams
    scaler: Standardizer
    provenance: str = ""
    seed: int | None = None

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.structure.nodes

    def raw_params(self, node: str) -> NodeParams:
        """Parameters of ``node`` expressed in original units."""
        p = self.params[node]
        sc = self.scaler
        coefs = {q: w * sc.std[node] / sc.std[q] for q, w in p.coefficients.items()}
        intercept = sc.mean[node] + sc.std[node] * p.intercept - sum(
            coefs[q] * sc.mean[q] for q in coefs)
        return NodeParams(intercept, coefs, p.residual_variance * sc.std[node] ** 2)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.structure.sorted_edges()],
            "params": {
                n: {
                    "intercept": p.intercept,
                    "coefficients": dict(p.coefficients),
                    "residual_variance": p.residual_variance,
                }
                for n, p in self.params.items()
            },
            "standardization": {n: {"mean": self.scaler.mean[n], "std": self.scaler.std[n]} for n in self.nodes},
            "provenance": self.provenance,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaussianNetwork":
        dag = DAG(tuple(d["nodes"]), frozenset(tuple(e) for e in d["edges"]))
        params = {
            n: NodeParams(float(p["intercept"]), {k: float(v) for k, v in p["coefficients"].items()},
                          float(p["residual_variance"]))
            for n, p in d["params"].items()
        }
        st = d["standardization"]
        scaler = Standardizer({n: float(v["mean"]) for n, v in st.items()},
                              {n: float(v["std"]) for n, v in st.items()})
        return cls(dag, params, scaler, d.get("provenance", ""), d.get("seed"))

    def save(self, path: Path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> "GaussianNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_lgbn(structure: DAG, table: pd.DataFrame, provenance: str = "", seed: int | None = None,
             scaler: Standardizer | None = None) -> GaussianNetwork:
    """Per-node OLS on parents with MLE residual variance (divisor n)."""
    if not structure.is_acyclic():
        raise ValueError("structure must be acyclic")
    nodes = list(structure.nodes)
    scaler = scaler or Standardizer.fit(table, nodes)
    Z = scaler.transform(table, nodes)
    col = {n: i for i, n in enumerate(nodes)}
    params = {}
    for n in nodes:
        pa = structure.parents(n)
        X = Z[:, [col[p] for p in pa]] if pa else np.empty((len(Z), 0))
        b0, beta, var = _ols(Z[:, col[n]], X)
        params[n] = NodeParams(b0, dict(zip(pa, beta.tolist())), var)
    return GaussianNetwork(structure, params, scaler, provenance, seed)


def joint_gaussian(net: GaussianNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of all nodes (standardized scale, ``net.nodes`` order)."""
    nodes = list(net.nodes)
    d = len(nodes)
    col = {n: i for i, n in enumerate(nodes)}
    mu = np.zeros(d)
    sigma = np.zeros((d, d))
    done: list[int] = []
    for n in net.structure.topological_order():
        i = col[n]
        p = net.params[n]
        pa = [col[q] for q in p.coefficients]
        beta = np.array(list(p.coefficients.values()))
        mu[i] = p.intercept + (beta @ mu[pa] if pa else 0.0)
        if pa:
            cross = beta @ sigma[np.ix_(pa, done)] if done else np.zeros(0)
            sigma[i, done] = cross
            sigma[done, i] = cross
            sigma[i, i] = beta @ sigma[np.ix_(pa, pa)] @ beta + p.residual_variance
        else:
            sigma[i, i] = p.residual_variance
        done.append(i)
    return mu, sigma


@dataclass
class Prediction:
    mean: pd.DataFrame  # original units
    variance: dict  # target -> conditional variance, original units


def predict(net: GaussianNetwork, evidence: pd.DataFrame, targets: Sequence[str] = TARGETS,
            joint: tuple | None = None) -> Prediction:
    """Conditional-Gaussian mean of ``targets`` given the evidence columns.

    Every column of ``evidence`` that is a network node (and not a target)
    is conditioned on.  Inputs and outputs are in original units.
    """
    nodes = list(net.nodes)
    col = {n: i for i, n in enumerate(nodes)}
    targets = list(targets)
    ev = [c for c in evidence.columns if c in col and c not in targets]
    mu, sigma = joint if joint is not None else joint_gaussian(net)
    t = [col[c] for c in targets]
    sc = net.scaler
    if ev:
        e = [col[c] for c in ev]
        z = net.scaler.transform(evidence, ev)
        s_ee = sigma[np.ix_(e, e)]
        s_te = sigma[np.ix_(t, e)]
        if np.linalg.cond(s_ee) > 1e12:
            warnings.warn("evidence covariance is singular; using pseudo-inverse", SingularDesignWarning,
                          stacklevel=2)
            gain = s_te @ np.linalg.pinv(s_ee)
        else:
            gain = np.linalg.solve(s_ee, s_te.T).T
        mean_z = mu[t] + (z - mu[e]) @ gain.T
        var_z = np.diag(sigma[np.ix_(t, t)] - gain @ s_te.T)
    else:
        mean_z = np.tile(mu[t], (len(evidence), 1))
        var_z = np.diag(sigma[np.ix_(t, t)])
    out = pd.DataFrame(
        {c: sc.mean[c] + sc.std[c] * mean_z[:, k] for k, c in enumerate(targets)}, index=evidence.index)
    var = {c: float(max(var_z[k], 0.0)) * sc.std[c] ** 2 for k, c in enumerate(targets)}
    return Prediction(out, var)


def implied_slope(net: GaussianNetwork, source: str, target: str) -> float:
    """Slope of E[target | source] implied by the network, in original units."""
    mu, sigma = joint_gaussian(net)
    i, j = net.nodes.index(source), net.nodes.index(target)
    return sigma[j, i] / sigma[i, i] * net.scaler.std[target] / net.scaler.std[source]


def total_effect(net: GaussianNetwork, source: str, target: str) -> float:
    """Sum over directed paths of coefficient products, in original units."""
    nodes = list(net.nodes)
    B = np.zeros((len(nodes), len(nodes)))
    for n in nodes:
        for p, w in net.params[n].coefficients.items():
            B[nodes.index(p), nodes.index(n)] = w
    T = np.linalg.inv(np.eye(len(nodes)) - B) - np.eye(len(nodes))
    i, j = nodes.index(source), nodes.index(target)
    return T[i, j] * net.scaler.std[target] / net.scaler.std[source]


# --- evaluation and selection ---------------------------------------------

@dataclass
class EvalMetrics:
    mae: float
    nmae: float
    r: float


def evaluate(pred, truth) -> EvalMetrics:
    """MAE, range-normalized MAE and Pearson r of aligned vectors."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size < 3:
        raise ValueError("need aligned vectors with at least 3 points")
    mae = float(np.mean(np.abs(pred - truth)))
    span = float(truth.max() - truth.min())
    nmae = mae / span if span > 0 else math.nan
    if np.ptp(pred) == 0 or span == 0:
        r = math.nan
    else:
        r = float(np.corrcoef(pred, truth)[0, 1])
    return EvalMetrics(mae, nmae, r)


@dataclass
class Candidate:
    structure: DAG
    provenance: str
    nmae: dict = field(default_factory=dict)  # target -> validation NMAE

    @property
    def mean_nmae(self) -> float:
        return float(np.mean(list(self.nmae.values())))


def select_candidate(candidates: Sequence[Candidate]) -> Candidate:
    """Lowest mean validation NMAE; ties go to fewer edges, then the smaller tag."""
    if not candidates:
        raise ValueError("no candidates to select from")
    return min(candidates, key=lambda c: (c.mean_nmae, len(c.structure.edges), c.provenance))


def select_model(candidates: Sequence[Candidate], refit_table: pd.DataFrame, seed: int | None = None,
                 ) -> GaussianNetwork:
    """Pick the best candidate and refit it on ``refit_table`` (train + validation)."""
    best = select_candidate(candidates)
    return fit_lgbn(best.structure, refit_table, provenance=best.provenance, seed=seed)


def validation_nmae(net: GaussianNetwork, valid: pd.DataFrame, targets: Sequence[str] = TARGETS) -> dict:
    evidence = valid[[c for c in net.nodes if c not in targets]]
    pred = predict(net, evidence, targets).mean
    return {t: evaluate(pred[t], valid[t]).nmae for t in targets}


def notears_tag(omega: float) -> str:
    return f"notears(omega={omega:g})"


def search_candidates(train: pd.DataFrame, valid: pd.DataFrame, nodes: Sequence[str] = FEATURE_COLUMNS,
                      omegas: Sequence[float] = (0.05, 0.1, 0.2), lambda1: float = 0.1,
                      max_iters: int = 1000, seed: int = 0, forbid_into_demographics: bool = False,
                      targets: Sequence[str] = TARGETS) -> list[Candidate]:
    """Hill-climb and NOTEARS candidates, each scored by validation NMAE."""
    nodes = list(nodes)
    scaler = Standardizer.fit(train, nodes)
    z = pd.DataFrame(scaler.transform(train, nodes), columns=nodes)
    forbidden = set()
    if forbid_into_demographics:
        forbidden = {(a, b) for a in nodes for b in nodes if b in DEMOGRAPHIC and a != b}
    structures = [(learn_structure_hillclimb(z, max_iters, seed, forbidden), "hillclimb")]
    res = notears_weights(z.to_numpy(), nodes, lambda1, forbidden=forbidden)
    structures += [(res.dag(w), notears_tag(w)) for w in omegas]
    out = []
    for dag, tag in structures:
        net = fit_lgbn(dag, train, provenance=tag, scaler=scaler)
        out.append(Candidate(dag, tag, validation_nmae(net, valid, targets)))
    return out


# --- linear baseline ------------------------------------------------------

@dataclass
class LinearModel:
    target: str
    features: list
    intercept: float
    coefficients: np.ndarray

    def predict(self, table: pd.DataFrame) -> np.ndarray:
        return self.intercept + table[self.features].to_numpy(float) @ self.coefficients


def fit_linear_baseline(table: pd.DataFrame, target: str, features: Sequence[str] | None = None) -> LinearModel:
    """OLS of ``target`` on every other feature column."""
    features = [c for c in (features or FEATURE_COLUMNS) if c != target and c in table.columns]
    b0, beta, _ = _ols(table[target].to_numpy(float), table[features].to_numpy(float))
    return LinearModel(target, features, b0, beta)
