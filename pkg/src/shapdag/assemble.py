"""Merging per-regressor graphs, cycle removal and the end-to-end pipeline."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .attribution import explain, shap_discrepancy
from .dag import Dag
from .data import Dataset, standardize
from .models.gbt import GbtModel
from .models.mlp import MlpModel
from .models.tuning import fit_with_params, params_to_dict, search
from .orient import HsicConfig, OrientationResult, orient_edges
from .skeleton import SelectionConfig, Skeleton, build_skeleton

SCHEMA_VERSION = 1
REGRESSORS = ("gbt", "mlp")


class MissingDiscrepancyError(KeyError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage


class Digraph:
    """Mutable directed graph whose edges remember which regressors proposed them."""

    def __init__(self, nodes, edges=None):
        self.nodes = tuple(nodes)
        self.edges: dict[tuple[str, str], frozenset[str]] = {}
        known = set(self.nodes)
        for (u, v), prov in (edges or {}).items():
            if u == v:
                raise ValueError(f"self-loop on {u}")
            if u not in known or v not in known:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            self.edges[(u, v)] = frozenset(prov)

    @classmethod
    def from_orientations(cls, nodes, results: list[OrientationResult], label: str) -> "Digraph":
        return cls(nodes, {r.edge: {label} for r in results})

    def copy(self) -> "Digraph":
        return Digraph(self.nodes, dict(self.edges))

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.edges

    def __len__(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[str, str]]:
        return set(self.edges)

    def find_cycle(self) -> list[tuple[str, str]] | None:
        """One directed cycle as a list of edges, or None. Deterministic DFS."""
        children = {n: [] for n in self.nodes}
        for u, v in sorted(self.edges):
            children[u].append(v)
        state = {n: 0 for n in self.nodes}
        parent: dict[str, str] = {}
        for root in self.nodes:
            if state[root]:
                continue
            stack = [(root, iter(children[root]))]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                    continue
                if state[nxt] == 1:
                    cycle = [(node, nxt)]
                    cur = node
                    while cur != nxt:
                        cycle.append((parent[cur], cur))
                        cur = parent[cur]
                    return cycle[::-1]
                if state[nxt] == 0:
                    state[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(children[nxt])))
        return None

    def to_dag(self) -> Dag:
        return Dag(self.nodes, self.edges)


def combine(g1: Digraph, g2: Digraph, mode: str = "union") -> Digraph:
    if set(g1.nodes) != set(g2.nodes):
        raise ValueError("graphs are over different node sets")
    if mode == "union":
        keys = set(g1.edges) | set(g2.edges)
    elif mode == "intersection":
        keys = set(g1.edges) & set(g2.edges)
    else:
        raise ValueError(f"unknown combination mode {mode!r}")
    merged = {k: g1.edges.get(k, frozenset()) | g2.edges.get(k, frozenset()) for k in keys}
    return Digraph(g1.nodes, merged)


class DiscrepancyStore:
    """delta[(target, feature, regressor)]: how badly a feature's attributions
    reproduce the target's values (0 is perfect)."""

    def __init__(self, values: dict | None = None):
        self.values: dict[tuple[str, str, str], float] = {}
        for k, v in (values or {}).items():
            self[k] = v

    def __setitem__(self, key, value):
        if not value >= 0:
            raise ValueError(f"discrepancy must be >= 0, got {value}")
        self.values[tuple(key)] = float(value)

    def __getitem__(self, key) -> float:
        try:
            return self.values[tuple(key)]
        except KeyError:
            raise MissingDiscrepancyError(f"no discrepancy for {key}") from None

    def edge(self, u: str, v: str, regressors) -> float:
        """Discrepancy of u as a cause of v: the smallest over the given regressors."""
        vals = [self.values[(v, u, r)] for r in sorted(regressors) if (v, u, r) in self.values]
        if not vals:
            raise MissingDiscrepancyError(f"no discrepancy for edge {u} -> {v} from {sorted(regressors)}")
        return min(vals)

    def to_dict(self) -> list[dict]:
        return [{"target": t, "feature": f, "regressor": r, "delta": d}
                for (t, f, r), d in sorted(self.values.items())]


def compute_discrepancies(models: dict[str, dict], d: Dataset, background_size: int = 100,
                          n_samples: int = 200, rng=None) -> DiscrepancyStore:
    """Full-data attributions per (regressor, target), compared column by column to the target."""
    rng = np.random.default_rng(rng)
    store = DiscrepancyStore()
    for kind in sorted(models):
        for target in d.columns:
            names, X, y = d.features_for(target)
            bg = X[rng.choice(len(X), size=min(background_size, len(X)), replace=False)]
            s = explain(models[kind][target], X, bg, n_samples=n_samples, rng=rng)
            for j, feat in enumerate(names):
                store[(target, feat, kind)] = shap_discrepancy(y, s.values[:, j])
    return store


@dataclass
class CycleStep:
    action: str
    edge: tuple[str, str]
    delta: float
    reversed_delta: float | None = None


def break_cycles(g: Digraph, store: DiscrepancyStore, log: list | None = None) -> Dag:
    """Remove cycles using attribution discrepancies.

    Opposite-edge pairs go first: the direction with the larger discrepancy is
    dropped. Then, one cycle at a time, an edge is reversed if that lowers its
    discrepancy (the largest such gain wins, and the reverse edge must not
    already exist); otherwise the cycle edge with the largest discrepancy is
    removed. A reversed edge never qualifies for reversal again, so this ends.
    """
    g = g.copy()
    log = log if log is not None else []
    for u, v in sorted(g.edges):
        if (u, v) in g.edges and (v, u) in g.edges:
            d_uv = store.edge(u, v, g.edges[(u, v)])
            d_vu = store.edge(v, u, g.edges[(v, u)])
            drop = (v, u) if d_uv <= d_vu else (u, v)
            log.append(CycleStep("drop-opposite", drop, max(d_uv, d_vu)))
            del g.edges[drop]
    while (cycle := g.find_cycle()) is not None:
        best_rev, best_gain = None, 0.0
        worst, worst_delta = None, -np.inf
        for u, v in cycle:
            prov = g.edges[(u, v)]
            d_as = store.edge(u, v, prov)
            d_rev = store.edge(v, u, prov)
            if d_as - d_rev > best_gain and (v, u) not in g.edges:
                best_rev, best_gain = (u, v), d_as - d_rev
            if d_as > worst_delta:
                worst, worst_delta = (u, v), d_as
        if best_rev is not None:
            u, v = best_rev
            prov = g.edges.pop((u, v))
            g.edges[(v, u)] = prov
            log.append(CycleStep("reverse", (u, v), store.edge(u, v, prov), store.edge(v, u, prov)))
        else:
            del g.edges[worst]
            log.append(CycleStep("remove", worst, worst_delta))
    return g.to_dag()


@dataclass
class PipelineConfig:
    regressors: tuple[str, ...] = REGRESSORS
    mode: str = "union"
    T: int = 50
    q: float = 0.01
    tau: float = 0.2
    hpo_budget: int = 25
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    hsic: HsicConfig = field(default_factory=HsicConfig)
    mlp_hidden: tuple[int, ...] = (64, 64)
    n_samples: int = 200
    background_size: int = 100
    jobs: int = 1

    def __post_init__(self):
        self.regressors = tuple(self.regressors)
        if not self.regressors or any(r not in REGRESSORS for r in self.regressors):
            raise ValueError(f"regressors must be a non-empty subset of {REGRESSORS}")
        if self.mode not in ("union", "intersection"):
            raise ValueError("mode must be 'union' or 'intersection'")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.hpo_budget < 1:
            raise ValueError("hpo_budget must be >= 1")
        if self.n_samples < 1 or self.background_size < 1 or self.jobs < 1:
            raise ValueError("n_samples, background_size and jobs must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["regressors"] = list(self.regressors)
        out["mlp_hidden"] = list(self.mlp_hidden)
        return out


@dataclass
class DiscoveryResult:
    dag: Dag
    report: dict
    graphs: dict[str, Digraph]
    combined: Digraph
    store: DiscrepancyStore
    skeletons: dict[str, Skeleton]
    orientations: dict[str, list[OrientationResult]]
    models: dict[str, dict]

    def edge_json(self) -> dict:
        edges = []
        for u, v in sorted(self.dag.edges):
            prov = sorted(self.combined.edges.get((u, v)) or self.combined.edges.get((v, u)) or ())
            delta = self.store.edge(u, v, prov) if prov else None
            edges.append({"from": u, "to": v, "provenance": prov, "discrepancy": delta})
        return {"schema_version": SCHEMA_VERSION, "nodes": list(self.dag.nodes), "edges": edges}


def train_models(d: Dataset, kind: str, cfg: PipelineConfig, rng) -> tuple[dict, dict]:
    models, chosen = {}, {}
    for target in d.columns:
        result = search(d, target, kind, cfg.hpo_budget, rng, hidden=cfg.mlp_hidden)
        names, X, y = d.features_for(target)
        model = fit_with_params(kind, X, y, result.best, rng)
        model.feature_names = names
        model.target = target
        if isinstance(model, MlpModel):
            model.val_mse = result.best_score
        models[target] = model
        chosen[target] = {**params_to_dict(result.best), "val_mse": result.best_score}
    return models, chosen


def discover(d: Dataset, cfg: PipelineConfig = PipelineConfig(), rng=None) -> DiscoveryResult:
    """Train, vote, orient, merge and de-cycle; every stage is timed in the report."""
    rng = np.random.default_rng(rng)
    stage_rngs = dict(zip(("train", "skeleton", "orient", "discrepancy"),
                          np.random.SeedSequence(int(rng.integers(2**63))).spawn(4)))
    timings: dict[str, float] = {}
    report: dict = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict()}

    def run(stage, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            raise PipelineError(stage, exc) from exc
        finally:
            timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - t0

    if not d.standardized:
        d = run("standardize", lambda: standardize(d))
    models, skeletons, orientations, graphs = {}, {}, {}, {}
    report["hyperparameters"] = {}
    for kind in cfg.regressors:
        train_rng = np.random.default_rng(stage_rngs["train"].spawn(1)[0])
        models[kind], report["hyperparameters"][kind] = run(
            "train", lambda: train_models(d, kind, cfg, train_rng))
        sk_rng = np.random.default_rng(stage_rngs["skeleton"].spawn(1)[0])
        skeletons[kind] = run("skeleton", lambda: build_skeleton(
            models[kind], d, cfg.T, cfg.q, cfg.tau, cfg.selection, sk_rng, cfg.n_samples, cfg.jobs))
        or_rng = np.random.default_rng(stage_rngs["orient"].spawn(1)[0])
        orientations[kind] = run("orient", lambda: orient_edges(d, skeletons[kind].edges, cfg.hsic, or_rng))
        graphs[kind] = Digraph.from_orientations(d.columns, orientations[kind], kind)
    combined = graphs[cfg.regressors[0]]
    for kind in cfg.regressors[1:]:
        combined = combine(combined, graphs[kind], cfg.mode)
    store = run("discrepancy", lambda: compute_discrepancies(
        models, d, cfg.background_size, cfg.n_samples, np.random.default_rng(stage_rngs["discrepancy"])))
    steps: list[CycleStep] = []
    dag = run("break_cycles", lambda: break_cycles(combined, store, steps))
    report["timings"] = timings
    report["skeleton"] = {
        kind: {"fraction": sk.fraction, "greedy": sk.greedy,
               "edges": sorted(sorted(e) for e in sk.edges),
               "frequencies": sk.graph.matrix.tolist()}
        for kind, sk in skeletons.items()
    }
    report["orientation"] = {kind: [r.to_dict() for r in res] for kind, res in orientations.items()}
    report["combined_edges"] = [
        {"from": u, "to": v, "provenance": sorted(p)} for (u, v), p in sorted(combined.edges.items())
    ]
    report["cycle_steps"] = [asdict(s) for s in steps]
    report["discrepancies"] = store.to_dict()
    report["final_edges"] = [list(e) for e in sorted(dag.edges)]
    return DiscoveryResult(dag, report, graphs, combined, store, skeletons, orientations, models)
