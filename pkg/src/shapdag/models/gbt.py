"""Least-squares gradient boosting with exact greedy regression trees.

Trees are grown level by level. At each level every feature is scanned once in
presorted order and the best variance-reduction split is tracked for all open
nodes at the same time, so a level costs O(n * p) regardless of how many nodes
it has. Everything that touches rows runs under numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

MIN_GAIN = 1e-12
MAX_DEPTH = 12


class MalformedTreeError(ValueError):
    pass


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    subsample: float = 1.0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not 1 <= self.max_depth <= MAX_DEPTH:
            raise ValueError(f"max_depth must lie in [1, {MAX_DEPTH}]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class Tree:
    """Array-backed binary tree; node 0 is the root and leaves have feature -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def validate(self) -> None:
        n = self.n_nodes
        if n == 0:
            raise MalformedTreeError("tree has no nodes")
        for node in range(n):
            if self.cover[node] <= 0:
                raise MalformedTreeError(f"node {node} has non-positive cover")
            if self.is_leaf(node):
                continue
            lo, hi = self.left[node], self.right[node]
            if not (0 < lo < n and 0 < hi < n):
                raise MalformedTreeError(f"node {node} has an invalid child index")
            if abs(self.cover[lo] + self.cover[hi] - self.cover[node]) > 1e-9 * self.cover[node]:
                raise MalformedTreeError(
                    f"cover of node {node} ({self.cover[node]}) differs from the sum of its children"
                )

    def depth(self) -> int:
        def rec(node):
            if self.is_leaf(node):
                return 0
            return 1 + max(rec(self.left[node]), rec(self.right[node]))

        return rec(0)

    def to_dict(self, node: int = 0) -> dict:
        if self.is_leaf(node):
            return {"value": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "cover": float(self.cover[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        feat, thr, lo, hi, val, cov = [], [], [], [], [], []

        def rec(d):
            i = len(feat)
            for arr in (feat, thr, lo, hi, val, cov):
                arr.append(0)
            cov[i] = float(d["cover"])
            if "feature" in d:
                feat[i] = int(d["feature"])
                thr[i] = float(d["threshold"])
                val[i] = 0.0
                lo[i] = rec(d["left"])
                hi[i] = rec(d["right"])
            else:
                feat[i], thr[i], lo[i], hi[i] = -1, 0.0, -1, -1
                val[i] = float(d["value"])
            return i

        rec(doc)
        return cls(
            np.array(feat, dtype=np.int64), np.array(thr, dtype=float),
            np.array(lo, dtype=np.int64), np.array(hi, dtype=np.int64),
            np.array(val, dtype=float), np.array(cov, dtype=float),
        )

    @classmethod
    def stump(cls, feature: int, threshold: float, left_value: float, right_value: float,
              left_cover: float = 1.0, right_cover: float = 1.0) -> "Tree":
        return cls(
            np.array([feature, -1, -1]), np.array([threshold, 0.0, 0.0]),
            np.array([1, -1, -1]), np.array([2, -1, -1]),
            np.array([0.0, left_value, right_value]),
            np.array([left_cover + right_cover, left_cover, right_cover]),
        )


@dataclass(frozen=True)
class PackedEnsemble:
    """All trees concatenated into flat arrays with global child indices."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    roots: np.ndarray


@dataclass
class GbtModel:
    trees: list[Tree]
    learning_rate: float
    base: float
    n_features: int
    feature_names: list[str] = field(default_factory=list)
    target: str = ""
    train_loss: list[float] = field(default_factory=list)
    _packed: PackedEnsemble | None = field(default=None, init=False, repr=False, compare=False)
    # derived tables (e.g. leaf boxes for attribution) keyed by name
    cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    kind = "gbt"

    def packed(self) -> PackedEnsemble:
        if self._packed is None:
            self._packed = pack(self.trees)
        return self._packed

    def validate(self) -> None:
        for t in self.trees:
            t.validate()

    def predict(self, rows) -> np.ndarray:
        X = np.atleast_2d(np.asarray(rows, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        pk = self.packed()
        return _predict(X, pk.feature, pk.threshold, pk.left, pk.right, pk.value, pk.roots,
                        self.learning_rate, self.base)

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "learning_rate": self.learning_rate,
            "base": self.base,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "target": self.target,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbtModel":
        return cls(
            [Tree.from_dict(t) for t in doc["trees"]], float(doc["learning_rate"]),
            float(doc["base"]), int(doc["n_features"]), list(doc.get("feature_names", [])),
            doc.get("target", ""),
        )


def pack(trees: list[Tree]) -> PackedEnsemble:
    if not trees:
        empty_i, empty_f = np.zeros(0, np.int64), np.zeros(0)
        return PackedEnsemble(empty_i, empty_f, empty_i, empty_i, empty_f, empty_f, empty_i)
    offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])

    def shift(arr, off):
        arr = arr.astype(np.int64)
        return np.where(arr >= 0, arr + off, -1)

    return PackedEnsemble(
        np.concatenate([t.feature for t in trees]).astype(np.int64),
        np.concatenate([t.threshold for t in trees]).astype(float),
        np.concatenate([shift(t.left, o) for t, o in zip(trees, offsets)]),
        np.concatenate([shift(t.right, o) for t, o in zip(trees, offsets)]),
        np.concatenate([t.value for t in trees]).astype(float),
        np.concatenate([t.cover for t in trees]).astype(float),
        offsets.astype(np.int64),
    )


@numba.njit(cache=True)
def _predict(X, feature, threshold, left, right, value, roots, lr, base):
    n = X.shape[0]
    out = np.full(n, base)
    for k in range(n):
        s = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[k, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[k] += lr * s
    return out


@numba.njit(cache=True)
def _grow_tree(X, order, rows_mask, g, max_depth, msl):
    """Grow one tree on the residuals ``g`` using only rows with rows_mask set.

    ``order[:, f]`` lists all row indices sorted by feature f.
    """
    n, p = X.shape
    cap = 2 ** (max_depth + 1) - 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    val = np.zeros(cap)
    cov = np.zeros(cap)
    node_of = np.full(n, -1, np.int64)
    tot_sum = np.zeros(cap)
    tot_cnt = np.zeros(cap)
    for r in range(n):
        if rows_mask[r]:
            node_of[r] = 0
            tot_sum[0] += g[r]
            tot_cnt[0] += 1
    n_nodes = 1
    level_start, level_end = 0, 1
    for depth in range(max_depth):
        best_gain = np.full(cap, MIN_GAIN)
        best_feat = np.full(cap, -1, np.int64)
        best_thr = np.zeros(cap)
        any_open = False
        for node in range(level_start, level_end):
            if tot_cnt[node] >= 2 * msl:
                any_open = True
        if not any_open:
            break
        l_sum = np.zeros(cap)
        l_cnt = np.zeros(cap)
        last = np.zeros(cap)
        for f in range(p):
            l_sum[level_start:level_end] = 0.0
            l_cnt[level_start:level_end] = 0.0
            for i in range(n):
                r = order[i, f]
                node = node_of[r]
                if node < level_start or node >= level_end or tot_cnt[node] < 2 * msl:
                    continue
                v = X[r, f]
                nl = l_cnt[node]
                if nl >= msl and v > last[node]:
                    nr = tot_cnt[node] - nl
                    if nr >= msl:
                        sl = l_sum[node]
                        sr = tot_sum[node] - sl
                        gain = sl * sl / nl + sr * sr / nr - tot_sum[node] ** 2 / tot_cnt[node]
                        if gain > best_gain[node]:
                            best_gain[node] = gain
                            best_feat[node] = f
                            t = 0.5 * (last[node] + v)
                            if not t < v:
                                t = last[node]
                            best_thr[node] = t
                l_sum[node] += g[r]
                l_cnt[node] += 1
                last[node] = v
        next_start = n_nodes
        for node in range(level_start, level_end):
            if best_feat[node] >= 0:
                feat[node] = best_feat[node]
                thr[node] = best_thr[node]
                left[node] = n_nodes
                right[node] = n_nodes + 1
                n_nodes += 2
        if n_nodes == next_start:
            break
        for r in range(n):
            node = node_of[r]
            if node >= level_start and node < level_end and feat[node] >= 0:
                if X[r, feat[node]] <= thr[node]:
                    child = left[node]
                else:
                    child = right[node]
                node_of[r] = child
                tot_sum[child] += g[r]
                tot_cnt[child] += 1
        level_start, level_end = next_start, n_nodes
    for node in range(n_nodes):
        cov[node] = tot_cnt[node]
        if feat[node] < 0 and tot_cnt[node] > 0:
            val[node] = tot_sum[node] / tot_cnt[node]
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], val[:n_nodes], cov[:n_nodes]


@numba.njit(cache=True)
def _apply_tree(X, feat, thr, left, right, val):
    out = np.empty(X.shape[0])
    for k in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[k, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[k] = val[node]
    return out


def fit_gbt(X: np.ndarray, y: np.ndarray, params: GbtParams = GbtParams(), rng=None) -> GbtModel:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per target value")
    n = len(y)
    rng = np.random.default_rng(rng)
    base = float(y.mean())
    pred = np.full(n, base)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable"))
    trees = []
    losses = [float(np.mean((y - pred) ** 2))]
    k = max(2, int(round(params.subsample * n)))
    for _ in range(params.n_trees):
        if params.subsample < 1.0:
            mask = np.zeros(n, dtype=np.bool_)
            mask[rng.choice(n, size=min(k, n), replace=False)] = True
        else:
            mask = np.ones(n, dtype=np.bool_)
        g = y - pred
        arrays = _grow_tree(X, order, mask, g, params.max_depth, params.min_samples_leaf)
        tree = Tree(*[a.copy() for a in arrays])
        trees.append(tree)
        pred = pred + params.learning_rate * _apply_tree(X, *arrays[:5])
        losses.append(float(np.mean((y - pred) ** 2)))
    return GbtModel(trees, params.learning_rate, base, X.shape[1], train_loss=losses)


def train_gbt(d, target: str, params: GbtParams = GbtParams(), rng=None) -> GbtModel:
    if d.n_rows < 10:
        raise ValueError(f"need at least 10 rows to train, got {d.n_rows}")
    names, X, y = d.features_for(target)
    model = fit_gbt(X, y, params, rng)
    model.feature_names = names
    model.target = target
    return model
