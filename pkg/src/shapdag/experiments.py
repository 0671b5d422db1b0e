"""Experiment harnesses: the three-variable attribution study and the
regressor-combination benchmark on synthetic linear SEMs."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .assemble import PipelineConfig, break_cycles, combine, discover
from .attribution import importance, shap_tree
from .dag import CycleError, topological_order
from .metrics import MetricsReport, full_report
from .models.gbt import GbtParams, fit_gbt
from .synth import (VALIDATION_FEATURES, MechanismFamily, ValidationKind, generate_sem,
                    generate_validation, partial_correlation_test, pearson, sample_dag)

VALIDATION_GBT = GbtParams(n_trees=200, max_depth=4, learning_rate=0.05, min_samples_leaf=1)
STUDY_COLUMNS = ("structure", "feature", "rho_mean", "rho_sd", "rho_partial_mean", "rho_partial_sd",
                 "p_mean", "p_sd", "phi_mean", "phi_sd")


def validation_replicate(kind, n: int = 5000, rng=None, noise_sd: float = 0.10, holdout: int = 1000,
                         background: int | None = 100) -> dict[str, dict[str, float]]:
    """One replicate: per feature, its Pearson and partial correlation with Y, the
    partial correlation's Fisher-z p-value and the mean |attribution| of a GBT
    predicting Y, measured on ``holdout`` rows not used for training.

    ``background=None`` attributes against the trees' own covers instead of a
    reference sample.
    """
    kind = ValidationKind(getattr(kind, "value", kind))
    rng = np.random.default_rng(rng)
    d, _, target = generate_validation(kind, n, noise_sd, rng)
    feats = VALIDATION_FEATURES[kind]
    holdout = min(holdout, n // 2)
    perm = rng.permutation(n)
    test, train = perm[:holdout], perm[holdout:]
    X = np.column_stack([d.column(f) for f in feats])
    y = d.column(target)
    model = fit_gbt(X[train], y[train], VALIDATION_GBT, rng)
    model.feature_names = list(feats)
    bg = None if background is None else X[rng.choice(train, size=min(background, len(train)), replace=False)]
    imp = importance(shap_tree(model, X[test], bg, target=target)).as_dict()
    out = {}
    for f in feats:
        other = [g for g in feats if g != f]
        rho_p, p = partial_correlation_test(d, f, target, other)
        out[f] = {"rho": pearson(d.column(f), y), "rho_partial": rho_p, "p": p, "phi": imp[f]}
    return out


def validation_study(replicates: int = 50, n: int = 5000, seed: int = 0, noise_sd: float = 0.10,
                     kinds=tuple(ValidationKind), background: int | None = 100) -> list[dict]:
    """Mean and standard deviation (ddof=0) of every statistic per structure and feature."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rows = []
    kinds = [ValidationKind(getattr(k, "value", k)) for k in kinds]
    seeds = np.random.SeedSequence(seed).spawn(len(kinds))
    for kind, ss in zip(kinds, seeds):
        reps = [validation_replicate(kind, n, np.random.default_rng(s), noise_sd, background=background)
                for s in ss.spawn(replicates)]
        for f in VALIDATION_FEATURES[kind]:
            row = {"structure": kind.value, "feature": f}
            for stat, col in (("rho", "rho"), ("rho_partial", "rho_partial"), ("p", "p"), ("phi", "phi")):
                vals = np.array([r[f][stat] for r in reps])
                row[f"{col}_mean"] = float(vals.mean())
                row[f"{col}_sd"] = float(vals.std())
            rows.append(row)
    return rows


def rows_to_csv(rows: list[dict], columns=STUDY_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in columns})
    return buf.getvalue()


@dataclass
class BenchmarkCase:
    seed: int
    n_true_edges: int
    reports: dict[str, MetricsReport]
    acyclic: bool
    seconds: float
    timings: dict[str, float] = field(default_factory=dict)


def _acyclic(g) -> bool:
    try:
        topological_order(g.nodes, g.edges)
    except CycleError:
        return False
    return True


def benchmark_case(seed: int, family="linear", p: int = 10, m: int = 500,
                   cfg: PipelineConfig | None = None) -> BenchmarkCase:
    """Generate one SEM and score the single-regressor, union and intersection graphs.

    Every variant goes through the same discrepancy-driven cycle removal, so the
    comparison isolates the combination rule.
    """
    cfg = cfg or PipelineConfig()
    cfg = PipelineConfig(**{**cfg.__dict__, "regressors": ("gbt", "mlp"), "mode": "union"})
    rng = np.random.default_rng(seed)
    truth = sample_dag(p, rng=rng)
    d = generate_sem(truth, MechanismFamily.parse(family), m, rng)
    t0 = time.perf_counter()
    res = discover(d, cfg, rng)
    seconds = time.perf_counter() - t0
    variants = {
        "gbt": break_cycles(res.graphs["gbt"], res.store),
        "mlp": break_cycles(res.graphs["mlp"], res.store),
        "union": res.dag,
        "intersection": break_cycles(combine(res.graphs["gbt"], res.graphs["mlp"], "intersection"), res.store),
    }
    reports = {k: full_report(v, truth) for k, v in variants.items()}
    acyclic = all(_acyclic(v) for v in variants.values())
    return BenchmarkCase(seed, len(truth.edges), reports, acyclic, seconds, res.report["timings"])


def benchmark(seeds, family="linear", p: int = 10, m: int = 500, cfg: PipelineConfig | None = None,
              jobs: int = 1) -> list[BenchmarkCase]:
    seeds = list(seeds)
    if jobs > 1 and len(seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(benchmark_case, seeds, [family] * len(seeds), [p] * len(seeds),
                                 [m] * len(seeds), [cfg] * len(seeds)))
    return [benchmark_case(s, family, p, m, cfg) for s in seeds]


def benchmark_csv(cases: list[BenchmarkCase]) -> str:
    lines = ["seed,variant,n_true_edges," + MetricsReport.csv_header()]
    for c in cases:
        for variant, r in c.reports.items():
            lines.append(f"{c.seed},{variant},{c.n_true_edges},{r.to_csv_row()}")
    return "\n".join(lines) + "\n"


def benchmark_summary(cases: list[BenchmarkCase]) -> dict[str, dict[str, float]]:
    out = {}
    for variant in ("gbt", "mlp", "union", "intersection"):
        f1 = [c.reports[variant].f1 for c in cases]
        shd = [c.reports[variant].shd for c in cases]
        out[variant] = {"median_f1": float(np.median(f1)), "median_shd": float(np.median(shd))}
    return out
