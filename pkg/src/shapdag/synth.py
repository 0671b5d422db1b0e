"""Synthetic ground truth: random DAGs, structural equation models and the
three-variable validation structures, plus partial-correlation testing."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dag import Dag
from .data import Dataset, standardize


class SemGenerationError(RuntimeError):
    pass


class MechanismFamily(str, enum.Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    GP_ADDITIVE = "gp_additive"
    GP_MIX = "gp_mix"
    SIGMOID_MIX = "sigmoid_mix"

    @classmethod
    def parse(cls, value: "str | MechanismFamily") -> "MechanismFamily":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"gpadditive": "gp_additive", "gp_am": "gp_additive", "gpmix": "gp_mix",
                   "sigmoidmix": "sigmoid_mix", "sigmoid": "sigmoid_mix", "poly": "polynomial"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class NoiseSpec:
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.sds) < 0):
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def sample(cls, p: int, rng) -> "NoiseSpec":
        rng = np.random.default_rng(rng)
        return cls(rng.uniform(-2, 2, size=p), rng.uniform(0, 0.4, size=p))


@dataclass
class SemParams:
    """Everything needed to simulate a SEM on a fixed graph, except GP draws
    (those are function values at the realised inputs and are drawn at simulation time)."""

    family: MechanismFamily
    noise: NoiseSpec
    coefficients: dict[tuple[str, str], float] = field(default_factory=dict)
    sigmoid: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    degree: int = 2


def default_names(p: int) -> list[str]:
    return [f"V{i}" for i in range(p)]


def sample_dag(p: int, max_parents: int = 5, rng=None, names=None) -> Dag:
    """Random DAG whose i-th node (in a random topological order) gets a number of
    parents drawn uniformly from {0, ..., min(max_parents, i)}."""
    if p < 2:
        raise ValueError(f"need at least 2 variables, got p={p}")
    if max_parents < 0:
        raise ValueError("max_parents must be >= 0")
    rng = np.random.default_rng(rng)
    names = list(names) if names is not None else default_names(p)
    order = rng.permutation(p)
    edges = []
    for pos, node in enumerate(order):
        k = int(rng.integers(0, min(max_parents, pos) + 1))
        if k:
            for parent in rng.choice(order[:pos], size=k, replace=False):
                edges.append((names[parent], names[node]))
    return Dag(names, edges)


def sample_mechanisms(g: Dag, family, rng=None, degree: int = 2) -> SemParams:
    family = MechanismFamily.parse(family)
    if family is MechanismFamily.POLYNOMIAL and degree < 1:
        raise ValueError("polynomial degree must be >= 1")
    rng = np.random.default_rng(rng)
    noise = NoiseSpec.sample(len(g.nodes), rng)
    params = SemParams(family, noise, degree=degree)
    for node in g.order:
        pa = sorted(g.parents(node))
        if family in (MechanismFamily.LINEAR, MechanismFamily.POLYNOMIAL):
            for j in pa:
                params.coefficients[(j, node)] = float(rng.normal())
        elif family is MechanismFamily.SIGMOID_MIX:
            a = rng.exponential(4.0) + 1.0
            b = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
            c = rng.uniform(-2.0, 2.0)
            params.sigmoid[node] = (float(a), float(b), float(c))
    return params


def _rbf_gram(Z: np.ndarray) -> np.ndarray:
    sq = np.sum(Z**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * Z @ Z.T, 0.0)
    return np.exp(-0.5 * d2)


def sample_gp(inputs: np.ndarray, rng, jitter: float = 1e-8) -> np.ndarray:
    """Function values of a zero-mean GP with a unit-bandwidth Gaussian kernel."""
    Z = inputs.reshape(len(inputs), -1)
    K = _rbf_gram(Z)
    n = len(Z)
    for eps in (jitter, jitter * 1e2, jitter * 1e4):
        try:
            L = np.linalg.cholesky(K + eps * np.eye(n))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise SemGenerationError("Cholesky factorisation of the GP kernel failed")
    return L @ rng.standard_normal(n)


def _sigmoid(x, a, b, c):
    u = b * (x + c)
    return a * u / (1.0 + np.abs(u))


def simulate(g: Dag, params: SemParams, m: int, rng=None) -> np.ndarray:
    """Raw (unstandardized) samples, columns in ``g.nodes`` order."""
    if m < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(rng)
    idx = {n: i for i, n in enumerate(g.nodes)}
    X = np.zeros((m, len(g.nodes)))
    fam = params.family
    for node in g.order:
        i = idx[node]
        pa = sorted(g.parents(node))
        eps = rng.normal(params.noise.means[i], params.noise.sds[i], size=m)
        P = X[:, [idx[j] for j in pa]]
        if fam is MechanismFamily.LINEAR:
            w = np.array([params.coefficients[(j, node)] for j in pa])
            X[:, i] = P @ w + eps
        elif fam is MechanismFamily.POLYNOMIAL:
            w = np.array([params.coefficients[(j, node)] for j in pa])
            X[:, i] = (P**params.degree) @ w + eps
        elif fam is MechanismFamily.GP_ADDITIVE:
            f = sum((sample_gp(P[:, k], rng) for k in range(len(pa))), np.zeros(m))
            X[:, i] = f + eps
        elif fam is MechanismFamily.GP_MIX:
            X[:, i] = sample_gp(np.column_stack([P, eps]), rng)
        elif fam is MechanismFamily.SIGMOID_MIX:
            if pa:
                a, b, c = params.sigmoid[node]
                X[:, i] = _sigmoid(P.sum(axis=1), a, b, c) + eps
            else:
                X[:, i] = eps
        else:  # pragma: no cover
            raise ValueError(f"unknown family {fam}")
    if not np.all(np.isfinite(X)):
        raise SemGenerationError("simulation produced non-finite values")
    return X


def generate_sem(g: Dag, family, m: int, rng=None, degree: int = 2) -> Dataset:
    """Sample mechanisms and noise for ``g``, simulate ``m`` rows and standardize."""
    rng = np.random.default_rng(rng)
    params = sample_mechanisms(g, family, rng, degree=degree)
    X = simulate(g, params, m, rng)
    return standardize(Dataset(g.nodes, X))


class ValidationKind(str, enum.Enum):
    CONFOUNDER = "confounder"
    CHAIN = "chain"
    COLLIDER = "collider"
    COLLINEAR = "collinear"


VALIDATION_FEATURES = {
    ValidationKind.CONFOUNDER: ("X", "Z"),
    ValidationKind.CHAIN: ("X", "Z"),
    ValidationKind.COLLIDER: ("X", "Z"),
    ValidationKind.COLLINEAR: ("X1", "X2"),
}


def generate_validation(kind, n: int = 5000, noise_sd: float = 0.10, rng=None,
                        collinear_sd: float = 0.01) -> tuple[Dataset, Dag, str]:
    """Linear-Gaussian three-node structures with unit coefficients.

    Exogenous roots are N(0, 1); every structural equation adds N(0, noise_sd^2).
    Returns (data, true graph, target name); the target is always ``Y``.
    """
    kind = ValidationKind(str(getattr(kind, "value", kind)).lower())
    if n < 10:
        raise ValueError("need at least 10 samples")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = np.random.default_rng(rng)

    def e():
        return noise_sd * rng.standard_normal(n)

    if kind is ValidationKind.CONFOUNDER:
        Z = rng.standard_normal(n)
        X = Z + e()
        Y = Z + e()
        cols, vals, edges = ("X", "Y", "Z"), (X, Y, Z), [("Z", "X"), ("Z", "Y")]
    elif kind is ValidationKind.CHAIN:
        X = rng.standard_normal(n)
        Z = X + e()
        Y = Z + e()
        cols, vals, edges = ("X", "Y", "Z"), (X, Y, Z), [("X", "Z"), ("Z", "Y")]
    elif kind is ValidationKind.COLLIDER:
        X = rng.standard_normal(n)
        Y = rng.standard_normal(n)
        Z = X + Y + e()
        cols, vals, edges = ("X", "Y", "Z"), (X, Y, Z), [("X", "Z"), ("Y", "Z")]
    else:
        X1 = rng.standard_normal(n)
        X2 = X1 + collinear_sd * rng.standard_normal(n)
        Y = X1 + X2 + e()
        cols, vals, edges = ("X1", "X2", "Y"), (X1, X2, Y), [("X1", "Y"), ("X2", "Y")]
    return Dataset(cols, np.column_stack(vals)), Dag(cols, edges), "Y"


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


def partial_correlation_test(d: Dataset, a: str, b: str, conditioning=()) -> tuple[float, float]:
    """Partial Pearson correlation of ``a`` and ``b`` given ``conditioning`` and its
    two-sided Fisher-z p-value."""
    conditioning = list(conditioning)
    if a == b:
        raise ValueError("a and b must differ")
    if a in conditioning or b in conditioning:
        raise ValueError("tested variables cannot be in the conditioning set")
    n = d.n_rows
    k = len(conditioning)
    if k >= n - 3:
        raise ValueError(f"conditioning set of size {k} too large for n={n}")
    x, y = d.column(a), d.column(b)
    if k:
        Z = np.column_stack([np.ones(n)] + [d.column(c) for c in conditioning])
        if np.linalg.matrix_rank(Z) < k + 1:
            raise np.linalg.LinAlgError("singular covariance of the conditioning set")
        coef, *_ = np.linalg.lstsq(Z, np.column_stack([x, y]), rcond=None)
        res = np.column_stack([x, y]) - Z @ coef
        x, y = res[:, 0], res[:, 1]
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt((x @ x) * (y @ y))
    if denom <= 0:
        raise np.linalg.LinAlgError("zero residual variance, covariance is singular")
    r = float(np.clip(x @ y / denom, -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    z = np.arctanh(r) * np.sqrt(n - k - 3)
    return r, float(2 * stats.norm.sf(abs(z)))
