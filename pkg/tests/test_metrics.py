import json
from itertools import combinations, product

import networkx as nx
import numpy as np
import pytest

from shapdag.dag import Dag, NodeMismatchError
from shapdag.metrics import (MetricsReport, confusion, d_separated, f1_score, full_report,
                             precision_recall_f1, shd, sid)


def all_dags(nodes):
    """Every labelled DAG on ``nodes`` (each unordered pair: absent, forward or backward)."""
    pairs = list(combinations(nodes, 2))
    out = []
    for states in product((0, 1, 2), repeat=len(pairs)):
        edges = [(u, v) if s == 1 else (v, u) for (u, v), s in zip(pairs, states) if s]
        if nx.is_directed_acyclic_graph(nx.DiGraph(edges)):
            out.append(Dag(nodes, edges))
    return out


DAGS3 = all_dags(["a", "b", "c"])
DAGS4 = all_dags(["a", "b", "c", "d"])


def shd_oracle(est, truth):
    A, B = est.adjacency(), truth.adjacency(est.nodes)
    p = len(est.nodes)
    return sum((A[i, j], A[j, i]) != (B[i, j], B[j, i]) for i in range(p) for j in range(i + 1, p))


def confusion_oracle(est, truth):
    A, B = est.adjacency(), truth.adjacency(est.nodes)
    return int(np.sum(A * B)), int(np.sum(A * (1 - B))), int(np.sum(B * (1 - A)))


def _blocked(g: nx.DiGraph, path, z):
    for k in range(1, len(path) - 1):
        prev, mid, nxt = path[k - 1], path[k], path[k + 1]
        collider = g.has_edge(prev, mid) and g.has_edge(nxt, mid)
        if collider:
            if mid not in z and not (nx.descendants(g, mid) & z):
                return True
        elif mid in z:
            return True
    return False


def sid_oracle(est: Dag, truth: Dag):
    """Adjustment validity by explicit path enumeration over the true graph."""
    g = nx.DiGraph()
    g.add_nodes_from(truth.nodes)
    g.add_edges_from(truth.edges)
    skel = g.to_undirected()
    errors = 0
    for i, j in product(truth.nodes, repeat=2):
        if i == j:
            continue
        z = set(est.parents(i))
        if j in z:
            errors += j in nx.descendants(g, i)
            continue
        causal = [p for p in nx.all_simple_paths(g, i, j)]
        on_causal = {w for p in causal for w in p[1:]}
        forbidden = set(on_causal)
        for w in on_causal:
            forbidden |= nx.descendants(g, w)
        if z & forbidden:
            errors += 1
            continue
        bad = False
        for path in nx.all_simple_paths(skel, i, j):
            is_causal = all(g.has_edge(u, v) for u, v in zip(path, path[1:]))
            if not is_causal and not _blocked(g, path, z):
                bad = True
                break
        errors += bad
    return errors


def test_dag_enumeration_counts():
    assert len(DAGS3) == 25
    assert len(DAGS4) == 543


def test_confusion_examples():
    g = Dag("abc", [("a", "b"), ("b", "c")])
    assert confusion(g, g) == (2, 0, 0)
    assert confusion(Dag("ab", [("b", "a")]), Dag("ab", [("a", "b")])) == (0, 1, 1)
    assert confusion(Dag("ab", []), Dag("ab", [("a", "b")])) == (0, 0, 1)


def test_shd_examples():
    g = Dag("abc", [("a", "b")])
    assert shd(g, g) == 0
    assert shd(Dag("ab", [("b", "a")]), Dag("ab", [("a", "b")])) == 1


def test_exhaustive_three_nodes():
    for est, truth in product(DAGS3, repeat=2):
        assert shd(est, truth) == shd_oracle(est, truth) == shd(truth, est)
        assert confusion(est, truth) == confusion_oracle(est, truth)
        assert sid(est, truth) == sid_oracle(est, truth)


def test_all_four_node_dags_against_empty():
    empty = Dag("abcd", [])
    for g in DAGS4:
        assert shd(empty, g) == len(g.edges)
        assert shd(g, empty) == len(g.edges)


def test_sid_random_four_node_pairs():
    rng = np.random.default_rng(0)
    for _ in range(200):
        est, truth = (DAGS4[k] for k in rng.integers(0, len(DAGS4), 2))
        assert sid(est, truth) == sid_oracle(est, truth)


def test_sid_hand_examples():
    chain = Dag("abc", [("a", "b"), ("b", "c")])
    assert sid(chain, chain) == 0
    # empty estimate: forward pairs are fine, the three backward pairs are not
    assert sid(Dag("abc", []), chain) == 3
    assert sid(Dag("abc", [("c", "b"), ("b", "a")]), chain) == 6
    conf = Dag(["x", "y", "z"], [("z", "x"), ("z", "y")])
    est = Dag(["x", "y", "z"], [("x", "y")])
    assert sid(est, conf) >= 1
    assert not d_separated(conf, {"x"}, {"y"}, set())
    assert d_separated(conf, {"x"}, {"y"}, {"z"})


def test_sid_bounded():
    for est, truth in product(DAGS3, repeat=2):
        assert 0 <= sid(est, truth) <= 6


def test_node_mismatch():
    with pytest.raises(NodeMismatchError):
        shd(Dag("ab", []), Dag("abc", []))


def test_full_report_examples():
    g = Dag("abcd", [("a", "b"), ("c", "d")])
    r = full_report(g, g)
    assert (r.precision, r.recall, r.f1, r.shd, r.sid, r.edge_difference) == (1, 1, 1, 0, 0, 0)
    r = full_report(Dag("abcd", []), g)
    assert (r.precision, r.recall, r.f1, r.edge_difference) == (0, 0, 0, -2)


def test_f1_from_reported_precision_recall():
    assert abs(f1_score(0.952, 0.471) - 2 * 0.952 * 0.471 / (0.952 + 0.471)) < 1e-15
    assert abs(f1_score(0.952, 0.471) - 0.6302) < 1e-4
    assert f1_score(0.0, 0.0) == 0.0


def test_precision_identity_and_f1():
    for est, truth in product(DAGS3, repeat=2):
        tp, fp, fn = confusion(est, truth)
        p, r, f = precision_recall_f1(tp, fp, fn)
        if tp + fp:
            assert round(p * (tp + fp)) == tp
        if p + r:
            assert abs(f - 2 * p * r / (p + r)) < 1e-12


def test_report_serialisation():
    r = full_report(Dag("ab", [("b", "a")]), Dag("ab", [("a", "b")]))
    assert (r.shd, r.f1) == (1, 0)
    doc = json.loads(r.to_json())
    assert doc["schema_version"] == 1
    assert MetricsReport.from_dict(doc) == r
    row = r.to_csv_row().split(",")
    assert len(row) == len(MetricsReport.csv_header().split(","))
