"""Shapley attributions: brute-force coalitions, exact tree attribution,
expected gradients for networks, importance aggregation and the
attribution-vs-target discrepancy score.

Tree attribution works leaf by leaf. A leaf is the box of feature intervals
along its root path. For a pair (explained row x, reference row r) and a
coalition S, the hybrid point reaches the leaf iff every path feature is
satisfied by x (if in S) or by r (if not). Writing A for the path features only
x satisfies and B for those only r satisfies, the leaf's game is
v * 1[A in S, B outside S], whose Shapley values have a closed form depending
only on |A| and |B|. Rows are reduced to per-leaf bit patterns, so the work
per leaf depends on the number of distinct patterns, not on rows x references.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numba
import numpy as np

from .models.gbt import GbtModel
from .models.mlp import MlpModel

MAX_BRUTEFORCE_FEATURES = 15


class AttributionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShapMatrix:
    target: str
    features: tuple[str, ...]
    values: np.ndarray
    baseline: float

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, feature: str) -> np.ndarray:
        return self.values[:, self.features.index(feature)]

    def to_csv(self, path) -> None:
        header = ",".join(self.features)
        np.savetxt(path, self.values, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass(frozen=True)
class ImportanceVector:
    features: tuple[str, ...]
    scores: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {f: float(s) for f, s in zip(self.features, self.scores)}

    @classmethod
    def from_dict(cls, scores: dict[str, float]) -> "ImportanceVector":
        return cls(tuple(scores), np.array(list(scores.values()), dtype=float))


def importance(s: ShapMatrix) -> ImportanceVector:
    if s.n_rows < 1:
        raise ValueError("no explained rows")
    return ImportanceVector(s.features, np.abs(s.values).mean(axis=0))


def shap_discrepancy(target_values, phi_column) -> float:
    """Residual sum of squares of the attribution column against the target,
    divided by the target's total sum of squares (0 means identical)."""
    x = np.asarray(target_values, dtype=float)
    phi = np.asarray(phi_column, dtype=float)
    if x.shape != phi.shape or x.ndim != 1:
        raise ValueError("target and attribution column must be 1-D of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 values")
    ss = float(np.sum((x - x.mean()) ** 2))
    if ss <= 0:
        raise ValueError("target has zero variance")
    return float(np.sum((x - phi) ** 2) / ss)


# --- brute force -----------------------------------------------------------


def coalition_weight(size: int, n_features: int) -> float:
    return factorial(size) * factorial(n_features - size - 1) / factorial(n_features)


def shapley_from_game(values: np.ndarray, n_features: int) -> np.ndarray:
    """Shapley values of a game given as v[mask] for every coalition bitmask."""
    phi = np.zeros(n_features)
    w = [coalition_weight(s, n_features) for s in range(n_features)]
    for mask in range(1 << n_features):
        size = bin(mask).count("1")
        for j in range(n_features):
            if not mask >> j & 1:
                phi[j] += w[size] * (values[mask | 1 << j] - values[mask])
    return phi


def _as_callable(model):
    return model.predict if hasattr(model, "predict") else model


def interventional_game(model, row, background) -> np.ndarray:
    """v[S] = mean over background rows of f(row on S, background elsewhere)."""
    f = _as_callable(model)
    row = np.asarray(row, dtype=float)
    R = np.atleast_2d(np.asarray(background, dtype=float))
    p = len(row)
    # row k of masks is the bit pattern of the integer k, bit j standing for feature j
    masks = ((np.arange(1 << p)[:, None] >> np.arange(p)) & 1).astype(bool)
    Z = np.where(masks[:, None, :], row[None, None, :], R[None, :, :]).reshape(-1, p)
    return np.asarray(f(Z), dtype=float).reshape(1 << p, len(R)).mean(axis=1)


def shap_bruteforce(model, row, background) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    p = len(row)
    if p > MAX_BRUTEFORCE_FEATURES:
        raise ValueError(f"{p} features exceeds the enumeration cap of {MAX_BRUTEFORCE_FEATURES}")
    return shapley_from_game(interventional_game(model, row, background), p)


# --- trees -------------------------------------------------------------------


@dataclass(frozen=True)
class LeafTable:
    feat: np.ndarray  # (L, D) path features, -1 padded
    lo: np.ndarray
    hi: np.ndarray
    q: np.ndarray  # product of cover ratios per path feature
    k: np.ndarray
    value: np.ndarray  # leaf value times learning rate


def leaf_table(model: GbtModel) -> LeafTable:
    if "leaves" in model.cache:
        return model.cache["leaves"]
    rows = []
    for tree in model.trees:
        stack = [(0, {})]
        while stack:
            node, box = stack.pop()
            if tree.is_leaf(node):
                rows.append((box, model.learning_rate * float(tree.value[node])))
                continue
            f, t = int(tree.feature[node]), float(tree.threshold[node])
            lo, hi, q = box.get(f, (-np.inf, np.inf, 1.0))
            c = tree.cover[node]
            l, r = int(tree.left[node]), int(tree.right[node])
            ql = tree.cover[l] / c if c > 0 else 0.5
            qr = tree.cover[r] / c if c > 0 else 0.5
            stack.append((r, {**box, f: (max(lo, t), hi, q * qr)}))
            stack.append((l, {**box, f: (lo, min(hi, t), q * ql)}))
    D = max([len(b) for b, _ in rows] + [1])
    L = len(rows)
    feat = np.full((L, D), -1, np.int64)
    lo = np.zeros((L, D))
    hi = np.zeros((L, D))
    q = np.ones((L, D))
    k = np.zeros(L, np.int64)
    value = np.zeros(L)
    for i, (box, v) in enumerate(rows):
        k[i] = len(box)
        value[i] = v
        for j, f in enumerate(sorted(box)):
            feat[i, j] = f
            lo[i, j], hi[i, j], q[i, j] = box[f]
    table = LeafTable(feat, lo, hi, q, k, value)
    model.cache["leaves"] = table
    return table


@numba.njit(cache=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@numba.njit(cache=True)
def _pattern(row, feat, lo, hi, k):
    pat = 0
    for j in range(k):
        x = row[feat[j]]
        if lo[j] < x and x <= hi[j]:
            pat |= 1 << j
    return pat


@numba.njit(cache=True)
def _tree_shap_interventional(X, R, feat, lo, hi, k_arr, value, n_features):
    n, nb = X.shape[0], R.shape[0]
    phi = np.zeros((n, n_features))
    D = feat.shape[1]
    fact = np.ones(D + 2)
    for i in range(1, D + 2):
        fact[i] = fact[i - 1] * i
    xpat = np.empty(n, np.int64)
    for leaf in range(feat.shape[0]):
        k = k_arr[leaf]
        v = value[leaf]
        if v == 0.0 or k == 0:
            continue
        full = (1 << k) - 1
        rpat = np.empty(nb, np.int64)
        for b in range(nb):
            rpat[b] = _pattern(R[b], feat[leaf], lo[leaf], hi[leaf], k)
        rp_sorted = np.sort(rpat)
        uniq = np.empty(nb, np.int64)
        cnt = np.zeros(nb)
        m = 0
        for b in range(nb):
            if m == 0 or rp_sorted[b] != uniq[m - 1]:
                uniq[m] = rp_sorted[b]
                m += 1
            cnt[m - 1] += 1.0
        for i in range(n):
            xpat[i] = _pattern(X[i], feat[leaf], lo[leaf], hi[leaf], k)
        order = np.argsort(xpat)
        contrib = np.zeros(k)
        prev = -1
        for oi in range(n):
            i = order[oi]
            xp = xpat[i]
            if xp != prev:
                prev = xp
                contrib[:] = 0.0
                for u in range(m):
                    rp = uniq[u]
                    if (xp | rp) != full:
                        continue
                    A = xp & ~rp
                    B = rp & ~xp
                    a = _popcount(A)
                    bb = _popcount(B)
                    if a + bb == 0:
                        continue
                    w = v * cnt[u] / nb
                    wa = w * fact[a - 1] * fact[bb] / fact[a + bb] if a > 0 else 0.0
                    wb = w * fact[a] * fact[bb - 1] / fact[a + bb] if bb > 0 else 0.0
                    for j in range(k):
                        if A >> j & 1:
                            contrib[j] += wa
                        elif B >> j & 1:
                            contrib[j] -= wb
            for j in range(k):
                phi[i, feat[leaf, j]] += contrib[j]
    return phi


@numba.njit(cache=True)
def _tree_shap_path(X, feat, lo, hi, q, k_arr, value, n_features):
    """Shapley values of the cover-weighted (path-dependent) expectation game."""
    n = X.shape[0]
    phi = np.zeros((n, n_features))
    D = feat.shape[1]
    fact = np.ones(D + 2)
    for i in range(1, D + 2):
        fact[i] = fact[i - 1] * i
    poly = np.zeros(D + 1)
    for leaf in range(feat.shape[0]):
        k = k_arr[leaf]
        v = value[leaf]
        if v == 0.0 or k == 0:
            continue
        for i in range(n):
            xp = _pattern(X[i], feat[leaf], lo[leaf], hi[leaf], k)
            for t in range(k):
                # coefficients of prod over the other path features of (q_f + o_f z)
                poly[:] = 0.0
                poly[0] = 1.0
                deg = 0
                for f in range(k):
                    if f == t:
                        continue
                    o = 1.0 if xp >> f & 1 else 0.0
                    qf = q[leaf, f]
                    for s in range(deg + 1, 0, -1):
                        poly[s] = poly[s] * qf + poly[s - 1] * o
                    poly[0] *= qf
                    deg += 1
                acc = 0.0
                for s in range(k):
                    acc += poly[s] * fact[s] * fact[k - 1 - s] / fact[k]
                o_t = 1.0 if xp >> t & 1 else 0.0
                phi[i, feat[leaf, t]] += v * (o_t - q[leaf, t]) * acc
    return phi


def path_dependent_expectation(model: GbtModel) -> float:
    """Expected prediction under the trees' own cover distribution."""
    total = model.base
    for tree in model.trees:
        def rec(node):
            if tree.is_leaf(node):
                return tree.value[node]
            l, r = tree.left[node], tree.right[node]
            return (tree.cover[l] * rec(l) + tree.cover[r] * rec(r)) / tree.cover[node]

        total += model.learning_rate * rec(0)
    return float(total)


def shap_tree(model: GbtModel, rows, background=None, target: str | None = None) -> ShapMatrix:
    """Exact interventional tree attribution averaged over ``background``.

    Without a background the trees' training covers stand in for the reference
    distribution; covers must then be consistent.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(rows, dtype=float)))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    names = tuple(model.feature_names) or tuple(f"x{j}" for j in range(model.n_features))
    target = target if target is not None else model.target
    if not model.trees:
        return ShapMatrix(target, names, np.zeros((len(X), model.n_features)), model.base)
    tab = leaf_table(model)
    if background is None:
        model.validate()
        phi = _tree_shap_path(X, tab.feat, tab.lo, tab.hi, tab.q, tab.k, tab.value, model.n_features)
        return ShapMatrix(target, names, phi, path_dependent_expectation(model))
    R = np.ascontiguousarray(np.atleast_2d(np.asarray(background, dtype=float)))
    if R.shape[1] != model.n_features or len(R) == 0:
        raise ValueError("background must be a non-empty matrix with the model's feature count")
    phi = _tree_shap_interventional(X, R, tab.feat, tab.lo, tab.hi, tab.k, tab.value, model.n_features)
    return ShapMatrix(target, names, phi, float(model.predict(R).mean()))


# --- networks ----------------------------------------------------------------


def shap_gradient(model: MlpModel, rows, background, n_samples: int = 200, rng=None,
                  target: str | None = None, chunk: int = 200_000) -> ShapMatrix:
    """Expected-gradients attribution with the noise input held at 0.

    For each row, references are cycled through the background in random order
    and each reference's interpolation points are stratified on (0, 1). The mean gradient is used
    as a control variate for the gap between the sampled and the full
    background mean, which makes the estimate exact for linear networks.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng)
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    R = np.atleast_2d(np.asarray(background, dtype=float))
    n, p = X.shape
    if p != model.n_features or R.shape[1] != p:
        raise ValueError(f"expected {model.n_features} features")
    nb = len(R)
    rbar = R.mean(axis=0)
    phi = np.empty((n, p))
    rows_per_chunk = max(1, chunk // n_samples)
    for start in range(0, n, rows_per_chunk):
        Xc = X[start:start + rows_per_chunk]
        c = len(Xc)
        reps = -(-n_samples // nb)
        ref_idx = np.stack([
            np.concatenate([rng.permutation(nb) for _ in range(reps)])[:n_samples] for _ in range(c)
        ])
        # the r-th visit to a reference draws alpha from the r-th of ``reps`` strata
        rounds = np.arange(n_samples) // nb
        alpha = (rounds[None, :] + rng.random((c, n_samples))) / reps
        refs = R[ref_idx]
        pts = refs + alpha[..., None] * (Xc[:, None, :] - refs)
        g = model.input_gradient(pts.reshape(-1, p))[:, :p].reshape(c, n_samples, p)
        if not np.all(np.isfinite(g)):
            raise AttributionError("non-finite gradient")
        est = np.mean((Xc[:, None, :] - refs) * g, axis=1)
        est += g.mean(axis=1) * (refs.mean(axis=1) - rbar)
        phi[start:start + c] = est
    names = tuple(model.feature_names) or tuple(f"x{j}" for j in range(p))
    target = target if target is not None else model.target
    return ShapMatrix(target, names, phi, float(model.predict(R).mean()))


def explain(model, rows, background, n_samples: int = 200, rng=None) -> ShapMatrix:
    if isinstance(model, GbtModel):
        return shap_tree(model, rows, background)
    if isinstance(model, MlpModel):
        return shap_gradient(model, rows, background, n_samples, rng)
    raise TypeError(f"cannot explain a {type(model).__name__}")
