"""Parent selection from attribution importances and bootstrapped skeleton voting."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attribution import ImportanceVector, explain, importance
from .data import Dataset, bootstrap_plan, sample_size


class SkeletonError(RuntimeError):
    pass


@dataclass(frozen=True)
class SelectionConfig:
    min_pts: int = 1
    zeta_margin: float = 1e-6
    greedy: bool = False
    percentile: float = 80.0
    # switch to greedy selection when the skeleton is much sparser than this share of all pairs
    auto_greedy: bool = False
    auto_greedy_ratio: float = 0.1

    def __post_init__(self):
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if not 0 < self.percentile < 100:
            raise ValueError("percentile must lie in (0, 100)")
        if self.zeta_margin <= 0:
            raise ValueError("zeta_margin must be > 0")


def dbscan_1d(values, eps: float, min_pts: int = 1) -> np.ndarray:
    """Density clustering of points on a line.

    Core points have at least ``min_pts`` points (themselves included) within
    distance ``eps``. Consecutive core points at most ``eps`` apart share a
    cluster; a non-core point joins the cluster of its nearest core point within
    reach, otherwise it is noise (-1). Clusters are numbered left to right.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot cluster an empty input")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    counts = np.searchsorted(xs, xs + eps, side="right") - np.searchsorted(xs, xs - eps, side="left")
    core = counts >= min_pts
    labels_sorted = np.full(len(xs), -1)
    cluster = -1
    last_core = None
    for i in range(len(xs)):
        if not core[i]:
            continue
        if last_core is None or xs[i] - xs[last_core] > eps:
            cluster += 1
        labels_sorted[i] = cluster
        last_core = i
    core_idx = np.flatnonzero(core)
    for i in np.flatnonzero(~core):
        if core_idx.size == 0:
            break
        j = core_idx[np.argmin(np.abs(xs[core_idx] - xs[i]))]
        if abs(xs[j] - xs[i]) <= eps:
            labels_sorted[i] = labels_sorted[j]
    labels = np.empty_like(labels_sorted)
    labels[order] = labels_sorted
    return labels


def _as_scores(imp) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(imp, ImportanceVector):
        return imp.features, np.asarray(imp.scores, dtype=float)
    return tuple(imp), np.array(list(imp.values()), dtype=float)


def select_parents(imp, cfg: SelectionConfig = SelectionConfig()) -> set[str]:
    """Cluster importances with a shrinking radius and keep the top cluster.

    The radius starts just above the largest pairwise distance, so everything
    forms one cluster. While a single cluster remains, the largest unused
    pairwise distance is removed and the radius is set just below it. The first
    time more than one cluster appears, the cluster with the highest mean
    importance is returned. If the distances run out first, no parents are
    selected.
    """
    names, s = _as_scores(imp)
    if len(s) < 2:
        raise ValueError("need at least 2 candidate features")
    iu = np.triu_indices(len(s), k=1)
    remaining = sorted(np.abs(s[:, None] - s[None, :])[iu].tolist())
    zeta = remaining[-1] + cfg.zeta_margin
    while True:
        labels = dbscan_1d(s, zeta, cfg.min_pts)
        clusters = sorted(set(labels.tolist()) - {-1})
        if len(clusters) > 1:
            means = [s[labels == c].mean() for c in clusters]
            best = clusters[int(np.argmax(means))]
            return {n for n, lab in zip(names, labels) if lab == best}
        if not remaining:
            return set()
        zeta = remaining.pop() - cfg.zeta_margin
        if zeta <= 0:
            return set()


def select_parents_greedy(imp, percentile: float = 80.0) -> set[str]:
    """Every feature whose importance is strictly above the given percentile."""
    if not 0 < percentile < 100:
        raise ValueError("percentile must lie in (0, 100)")
    names, s = _as_scores(imp)
    cut = np.percentile(s, percentile)
    return {n for n, v in zip(names, s) if v > cut}


@dataclass
class WeightedGraph:
    """Bootstrap selection frequencies.

    ``directed[i, j]`` is the share of rounds in which node j was chosen as a
    parent of node i. ``matrix`` symmetrises it by taking the larger direction.
    """

    nodes: tuple[str, ...]
    directed: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.maximum(self.directed, self.directed.T)

    def thresholded(self, tau: float) -> np.ndarray:
        m = self.matrix.copy()
        m[m < tau] = 0.0
        return m

    def edges(self, tau: float) -> set[frozenset[str]]:
        m = self.matrix
        p = len(self.nodes)
        return {
            frozenset((self.nodes[i], self.nodes[j]))
            for i in range(p) for j in range(i + 1, p)
            if m[i, j] > 0 and m[i, j] >= tau
        }

    def to_csv(self, path) -> None:
        header = ",".join(["node", *self.nodes])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for name, row in zip(self.nodes, self.matrix):
                fh.write(",".join([name, *(repr(float(v)) for v in row)]) + "\n")


@dataclass
class Skeleton:
    graph: WeightedGraph
    edges: set[frozenset[str]]
    tau: float
    fraction: float
    greedy: bool
    importances: list[dict[str, ImportanceVector]] = field(default_factory=list, repr=False)


def _round_importances(models, d: Dataset, rows, n_samples, seed):
    rng = np.random.default_rng(seed)
    out = {}
    for target in d.columns:
        try:
            _, X, _ = d.take(rows).features_for(target)
            s = explain(models[target], X, X, n_samples=n_samples, rng=rng)
            out[target] = importance(s)
        except Exception as exc:
            raise SkeletonError(f"target {target!r}: {exc}") from exc
    return out


def _vote(d: Dataset, rounds, cfg: SelectionConfig, greedy: bool) -> np.ndarray:
    pos = {n: i for i, n in enumerate(d.columns)}
    A = np.zeros((d.n_cols, d.n_cols))
    for imps in rounds:
        for target, imp in imps.items():
            chosen = select_parents_greedy(imp, cfg.percentile) if greedy else select_parents(imp, cfg)
            chosen.discard(target)
            for j in chosen:
                A[pos[target], pos[j]] += 1
    return A / len(rounds)


def build_skeleton(models: dict, d: Dataset, T: int = 50, q: float = 0.01, tau: float = 0.2,
                   cfg: SelectionConfig = SelectionConfig(), rng=None, n_samples: int = 200,
                   jobs: int = 1) -> Skeleton:
    """Vote for parents over T row subsamples and keep pairs chosen often enough.

    Each round draws its own rows and seed from the master generator up front,
    so the result does not depend on ``jobs``.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    missing = [c for c in d.columns if c not in models]
    if missing:
        raise ValueError(f"no model for targets {missing}")
    rng = np.random.default_rng(rng)
    plan = bootstrap_plan(T, q)
    k = sample_size(d.n_rows, plan.fraction)
    if k < 2:
        raise SkeletonError(f"sampling fraction {plan.fraction:.4g} leaves fewer than 2 rows")
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(T)
    row_sets = [np.random.default_rng(s).choice(d.n_rows, size=k, replace=False) for s in seeds]
    round_seeds = [s.spawn(1)[0] for s in seeds]
    tasks = list(zip(row_sets, round_seeds))
    rounds = []
    if jobs > 1 and T > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_round_importances, models, d, r, n_samples, s) for r, s in tasks]
            for t, fut in enumerate(futures):
                try:
                    rounds.append(fut.result())
                except Exception as exc:
                    raise SkeletonError(f"bootstrap iteration {t}: {exc}") from exc
    else:
        for t, (r, s) in enumerate(tasks):
            try:
                rounds.append(_round_importances(models, d, r, n_samples, s))
            except Exception as exc:
                raise SkeletonError(f"bootstrap iteration {t}: {exc}") from exc
    greedy = cfg.greedy
    A = _vote(d, rounds, cfg, greedy)
    graph = WeightedGraph(tuple(d.columns), A)
    edges = graph.edges(tau)
    p = d.n_cols
    if not greedy and cfg.auto_greedy and len(edges) < cfg.auto_greedy_ratio * p * (p - 1) / 2:
        greedy = True
        graph = WeightedGraph(tuple(d.columns), _vote(d, rounds, cfg, True))
        edges = graph.edges(tau)
    return Skeleton(graph, edges, tau, plan.fraction, greedy, rounds)
