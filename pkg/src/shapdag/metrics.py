"""Scores for an estimated DAG against a true one.

A reversed edge counts once as a false positive and once as a false negative,
and once towards the structural Hamming distance. The structural intervention
distance counts ordered pairs (i, j) for which the estimated parents of i would
give a wrong interventional effect of i on j in the true graph.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .dag import Dag

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    edge_difference: int
    shd: int
    sid: int

    CSV_FIELDS = ("tp", "fp", "fn", "precision", "recall", "f1", "edge_difference", "shd", "sid")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)

    def to_csv_row(self) -> str:
        return ",".join(repr(getattr(self, f)) if isinstance(getattr(self, f), float)
                        else str(getattr(self, f)) for f in self.CSV_FIELDS)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(**{f: doc[f] for f in cls.CSV_FIELDS})


def confusion(est: Dag, truth: Dag) -> tuple[int, int, int]:
    est.check_same_nodes(truth)
    tp = len(est.edges & truth.edges)
    return tp, len(est.edges - truth.edges), len(truth.edges - est.edges)


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def shd(est: Dag, truth: Dag) -> int:
    est.check_same_nodes(truth)
    dist = 0
    seen = set()
    for u, v in est.edges | truth.edges:
        key = frozenset((u, v))
        if key in seen:
            continue
        seen.add(key)
        in_est = (u, v) in est.edges or (v, u) in est.edges
        in_truth = (u, v) in truth.edges or (v, u) in truth.edges
        if in_est != in_truth:
            dist += 1
        elif ((u, v) in est.edges) != ((u, v) in truth.edges):
            dist += 1
    return dist


def ancestors(g: Dag, nodes) -> set[str]:
    parents = {n: set() for n in g.nodes}
    for u, v in g.edges:
        parents[v].add(u)
    out = set(nodes)
    stack = list(nodes)
    while stack:
        for p in parents[stack.pop()]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def d_separated(g: Dag, xs, ys, zs, removed=frozenset()) -> bool:
    """Whether ``zs`` d-separates ``xs`` from ``ys`` in ``g`` minus the edges in ``removed``.

    Uses the moral graph of the ancestral set of xs, ys and zs.
    """
    xs, ys, zs = set(xs), set(ys), set(zs)
    if xs & ys:
        return False
    edges = [e for e in g.edges if e not in removed]
    sub = Dag(g.nodes, edges)
    keep = ancestors(sub, xs | ys | zs)
    adj = {n: set() for n in keep}
    parents = {n: [] for n in keep}
    for u, v in edges:
        if u in keep and v in keep:
            adj[u].add(v)
            adj[v].add(u)
            parents[v].append(u)
    for ps in parents.values():
        for a in ps:
            for b in ps:
                if a != b:
                    adj[a].add(b)
    seen = set(xs - zs)
    stack = list(seen)
    while stack:
        n = stack.pop()
        if n in ys:
            return False
        for m in adj[n]:
            if m not in zs and m not in seen:
                seen.add(m)
                stack.append(m)
    return True


def _proper_causal_nodes(g: Dag, i: str, j: str) -> tuple[set[str], set[tuple[str, str]]]:
    """Nodes (other than i) on directed paths i -> ... -> j, and the first edges of those paths."""
    reach_j = ancestors(g, [j])
    on_path = {w for w in g.descendants(i) if w in reach_j}
    first = {(i, c) for c in g.children(i) if c in on_path}
    return on_path, first


def valid_adjustment(g: Dag, i: str, j: str, z: set[str]) -> bool:
    """Adjustment validity of ``z`` for the effect of i on j (i, j not in z)."""
    on_path, first = _proper_causal_nodes(g, i, j)
    forbidden = set()
    for w in on_path:
        forbidden |= {w} | g.descendants(w)
    if z & forbidden:
        return False
    return d_separated(g, {i}, {j}, z, removed=first)


def sid(est: Dag, truth: Dag) -> int:
    est.check_same_nodes(truth)
    errors = 0
    for i in truth.nodes:
        pa = est.parents(i)
        de = truth.descendants(i)
        for j in truth.nodes:
            if j == i:
                continue
            if j in pa:
                # the estimate implies i has no effect on j
                errors += j in de
            elif not valid_adjustment(truth, i, j, pa):
                errors += 1
    return errors


def full_report(est: Dag, truth: Dag) -> MetricsReport:
    tp, fp, fn = confusion(est, truth)
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    return MetricsReport(tp, fp, fn, precision, recall, f1,
                         len(est.edges) - len(truth.edges), shd(est, truth), sid(est, truth))
