"""Does merging the tree-based and network-based graphs help?

For a few synthetic linear SEMs the pipeline runs both regressor families once,
then scores four graphs against the truth: each family alone, the union of their
oriented edges and the intersection. All four go through the same cycle removal.

Run with ``python demos/combination_study.py [n_seeds]``; each seed takes about a
minute on one core.
"""
import sys

import numpy as np

from shapdag import PipelineConfig
from shapdag.experiments import benchmark, benchmark_summary

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
cfg = PipelineConfig(T=10, hpo_budget=3, n_samples=50)
cases = benchmark(range(n_seeds), "linear", p=8, m=500, cfg=cfg)

print(f"{'seed':>4} {'|E|':>4}  " + "  ".join(f"{v:>12}" for v in ("gbt", "mlp", "union", "intersection")))
for c in cases:
    cells = "  ".join(f"{c.reports[v].f1:>6.2f}/{c.reports[v].shd:<5d}" for v in ("gbt", "mlp", "union", "intersection"))
    print(f"{c.seed:>4} {c.n_true_edges:>4}  {cells}")
print("(cells are F1/SHD)\n")

for variant, s in benchmark_summary(cases).items():
    print(f"{variant:>12}: median F1 {s['median_f1']:.3f}, median SHD {s['median_shd']:.1f}")

recall = {v: np.median([c.reports[v].recall for c in cases]) for v in ("union", "intersection")}
print(f"\nmedian recall: union {recall['union']:.2f}, intersection {recall['intersection']:.2f}. "
      "The union keeps edges that only one family found, which raises recall; the "
      "intersection trades that for precision.")
