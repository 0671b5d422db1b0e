"""Seeded random hyperparameter search on a fixed 80/20 split."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .gbt import GbtModel, GbtParams, fit_gbt
from .mlp import MlpModel, MlpParams, fit_mlp, split_indices

SCHEMA_VERSION = 1

GBT_GRID = {
    "n_trees": [50, 100, 200, 300],
    "max_depth": [2, 3, 4, 5, 6],
    "learning_rate": [0.01, 0.03, 0.05, 0.1, 0.2],
    "min_samples_leaf": [1, 3, 5, 10, 20],
}

MLP_GRID = {
    "learning_rate": [3e-4, 1e-3, 3e-3, 1e-2],
    "epochs": [50, 100, 200],
    "batch_size": [16, 32, 64],
    "noise_sd": [0.1, 0.5, 1.0],
}


@dataclass
class TuningResult:
    best: GbtParams | MlpParams
    best_score: float
    history: list[tuple[GbtParams | MlpParams, float]]


def _draw(grid: dict, rng) -> dict:
    return {k: v[int(rng.integers(len(v)))] for k, v in grid.items()}


def fit_with_params(kind: str, X, y, params, seed):
    if kind == "gbt":
        return fit_gbt(X, y, params, seed)
    return fit_mlp(X, y, params, seed, validation=False)


def search(d, target: str, kind: str = "gbt", budget: int = 25, rng=None,
           grid: dict | None = None, hidden: tuple[int, ...] = (64, 64)) -> TuningResult:
    """Evaluate ``budget`` random grid configurations by validation MSE.

    The split is drawn first and each candidate then consumes the generator in a
    fixed pattern, so a larger budget extends the same candidate sequence.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if kind not in ("gbt", "mlp"):
        raise ValueError(f"unknown regressor kind {kind!r}")
    rng = np.random.default_rng(rng)
    _, X, y = d.features_for(target)
    tr, va = split_indices(len(y), rng)
    grid = grid or (GBT_GRID if kind == "gbt" else MLP_GRID)
    history = []
    for _ in range(budget):
        values = _draw(grid, rng)
        seed = int(rng.integers(2**31))
        params = GbtParams(**values) if kind == "gbt" else MlpParams(hidden=hidden, **values)
        model = fit_with_params(kind, X[tr], y[tr], params, seed)
        score = float(np.mean((model.predict(X[va]) - y[va]) ** 2))
        history.append((params, score if np.isfinite(score) else np.inf))
    best, best_score = min(history, key=lambda h: h[1])
    return TuningResult(best, best_score, history)


def tune(d, target: str, kind: str = "gbt", budget: int = 25, rng=None, **kw):
    return search(d, target, kind, budget, rng, **kw).best


def tune_and_train(d, target: str, kind: str = "gbt", budget: int = 25, rng=None,
                   **kw) -> GbtModel | MlpModel:
    """Pick hyperparameters by search, then refit on every row with the winner."""
    rng = np.random.default_rng(rng)
    result = search(d, target, kind, budget, rng, **kw)
    names, X, y = d.features_for(target)
    model = fit_with_params(kind, X, y, result.best, rng)
    model.feature_names = names
    model.target = target
    if kind == "mlp":
        model.val_mse = result.best_score
    return model


def params_to_dict(params) -> dict:
    out = asdict(params)
    out["kind"] = "gbt" if isinstance(params, GbtParams) else "mlp"
    return out


def model_to_json(model) -> str:
    doc = {"schema_version": SCHEMA_VERSION, **model.to_dict()}
    return json.dumps(doc)


def model_from_json(text: str):
    doc = json.loads(text)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema_version {version!r}")
    if doc["kind"] == "gbt":
        return GbtModel.from_dict(doc)
    if doc["kind"] == "mlp":
        return MlpModel.from_dict(doc)
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def predict(model, rows) -> np.ndarray:
    return model.predict(rows)
