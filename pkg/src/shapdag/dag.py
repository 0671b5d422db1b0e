"""Directed acyclic graph over named variables, plus text/DOT/JSON I/O."""

from __future__ import annotations

import json
import re
from collections import deque
from typing import Iterable

import numpy as np


class CycleError(ValueError):
    pass


class NodeMismatchError(ValueError):
    pass


def topological_order(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str]:
    """Kahn's algorithm; ties are broken by the order of ``nodes``. Raises CycleError."""
    nodes = list(nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    children: dict[str, list[str]] = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for u, v in edges:
        children[u].append(v)
        indeg[v] += 1
    ready = deque(sorted((n for n in nodes if indeg[n] == 0), key=pos.__getitem__))
    out = []
    while ready:
        u = ready.popleft()
        out.append(u)
        for v in sorted(children[u], key=pos.__getitem__):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(out) != len(nodes):
        raise CycleError("graph contains a directed cycle")
    return out


class Dag:
    """Immutable DAG. Edges are (parent, child) name pairs."""

    __slots__ = ("nodes", "edges", "_order")

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node names")
        known = set(nodes)
        es = set()
        for u, v in edges:
            if u not in known or v not in known:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise ValueError(f"self-loop on {u}")
            es.add((u, v))
        self.nodes = nodes
        self.edges = frozenset(es)
        self._order = topological_order(nodes, sorted(es))

    def __repr__(self):
        return f"Dag(nodes={list(self.nodes)}, edges={sorted(self.edges)})"

    def __eq__(self, other):
        return isinstance(other, Dag) and set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges))

    def __len__(self):
        return len(self.edges)

    @property
    def order(self) -> list[str]:
        return list(self._order)

    def parents(self, node: str) -> set[str]:
        return {u for u, v in self.edges if v == node}

    def children(self, node: str) -> set[str]:
        return {v for u, v in self.edges if u == node}

    def descendants(self, node: str) -> set[str]:
        out, stack = set(), [node]
        while stack:
            for c in self.children(stack.pop()):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def in_degrees(self) -> dict[str, int]:
        deg = {n: 0 for n in self.nodes}
        for _, v in self.edges:
            deg[v] += 1
        return deg

    def adjacency(self, order: Iterable[str] | None = None) -> np.ndarray:
        """0/1 matrix with A[i, j] = 1 for an edge nodes[i] -> nodes[j]."""
        order = list(order) if order is not None else list(self.nodes)
        pos = {n: i for i, n in enumerate(order)}
        A = np.zeros((len(order), len(order)), dtype=int)
        for u, v in self.edges:
            A[pos[u], pos[v]] = 1
        return A

    @classmethod
    def from_adjacency(cls, nodes: Iterable[str], A) -> "Dag":
        nodes = list(nodes)
        A = np.asarray(A)
        return cls(nodes, [(nodes[i], nodes[j]) for i, j in zip(*np.nonzero(A))])

    def check_same_nodes(self, other: "Dag") -> None:
        if set(self.nodes) != set(other.nodes):
            raise NodeMismatchError(
                f"node sets differ: {sorted(set(self.nodes) ^ set(other.nodes))}"
            )

    # --- serialization -------------------------------------------------

    def to_edgelist(self) -> str:
        lines = ["# nodes: " + " ".join(self.nodes)]
        lines += [f"{u} {v}" for u, v in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str, nodes: Iterable[str] | None = None) -> "Dag":
        declared: list[str] | None = list(nodes) if nodes is not None else None
        edges = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*nodes:\s*(.*)$", line)
                if m and declared is None:
                    declared = m.group(1).split()
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line: {raw!r}")
            edges.append((parts[0], parts[1]))
        if declared is None:
            seen: dict[str, None] = {}
            for u, v in edges:
                seen.setdefault(u)
                seen.setdefault(v)
            declared = list(seen)
        return cls(declared, edges)

    def to_dot(self, name: str = "G", edge_labels: dict[tuple[str, str], str] | None = None) -> str:
        lines = [f"digraph {name} {{"]
        lines += [f'  "{n}";' for n in self.nodes]
        for u, v in sorted(self.edges):
            label = edge_labels.get((u, v)) if edge_labels else None
            attr = f' [label="{label}"]' if label else ""
            lines.append(f'  "{u}" -> "{v}"{attr};')
        lines.append("}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dot(cls, text: str) -> "Dag":
        nodes: dict[str, None] = {}
        edges = []
        tok = r'"([^"]+)"|([A-Za-z0-9_.]+)'
        for raw in text.splitlines():
            line = raw.strip().rstrip(";")
            if not line or line.startswith(("digraph", "}", "//", "graph")) or line.startswith(("node ", "edge ")):
                continue
            m = re.match(rf"^(?:{tok})\s*->\s*(?:{tok})", line)
            if m:
                u = m.group(1) or m.group(2)
                v = m.group(3) or m.group(4)
                nodes.setdefault(u)
                nodes.setdefault(v)
                edges.append((u, v))
                continue
            m = re.match(rf"^(?:{tok})\s*(\[.*\])?$", line)
            if m:
                nodes.setdefault(m.group(1) or m.group(2))
        return cls(list(nodes), edges)

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [{"from": u, "to": v} for u, v in sorted(self.edges)]}

    @classmethod
    def from_json(cls, doc: dict) -> "Dag":
        return cls(doc["nodes"], [(e["from"], e["to"]) for e in doc["edges"]])


def read_dag(path) -> Dag:
    """Load a DAG from an edge list, DOT or JSON file (chosen by extension/content)."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if path.endswith(".json") or stripped.startswith("{"):
        return Dag.from_json(json.loads(text))
    if path.endswith(".dot") or stripped.startswith(("digraph", "strict")):
        return Dag.from_dot(text)
    return Dag.from_edgelist(text)
