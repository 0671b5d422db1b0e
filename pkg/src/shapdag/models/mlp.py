"""Feed-forward regressor with an auxiliary Gaussian noise input.

The network sees the observed features plus one extra input column. During
training that column is filled with fresh N(0, noise_sd^2) draws at every step;
at inference it is held at 0 unless the caller passes values explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingDivergedError(RuntimeError):
    pass


ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class MlpParams:
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    noise_sd: float = 1.0
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


def init_weights(sizes, rng) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Glorot-uniform weights; the output layer is shrunk so an untrained net predicts near 0."""
    Ws, bs = [], []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / (a + b))
        W = rng.uniform(-lim, lim, size=(a, b))
        if i == len(sizes) - 2:
            W *= 0.1
        Ws.append(W)
        bs.append(np.zeros(b))
    return Ws, bs


def forward(Ws, bs, Z, activation):
    """Returns the output vector and the per-layer (pre-activation, activation) cache."""
    a = Z
    cache = [(None, Z)]
    for i, (W, b) in enumerate(zip(Ws, bs)):
        z = a @ W + b
        a = z if i == len(Ws) - 1 else _act(activation, z)
        cache.append((z, a))
    return a[:, 0], cache


def loss_and_grads(Ws, bs, Z, y, activation):
    """Mean squared error and its gradients with respect to every weight and bias."""
    out, cache = forward(Ws, bs, Z, activation)
    n = len(y)
    err = out - y
    loss = float(np.mean(err**2))
    delta = (2.0 / n) * err[:, None]
    gWs, gbs = [None] * len(Ws), [None] * len(Ws)
    for i in range(len(Ws) - 1, -1, -1):
        a_prev = cache[i][1]
        gWs[i] = a_prev.T @ delta
        gbs[i] = delta.sum(axis=0)
        if i > 0:
            z_prev, a_prev_act = cache[i]
            delta = (delta @ Ws[i].T) * _act_grad(activation, z_prev, a_prev_act)
    return loss, gWs, gbs


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str
    noise_sd: float
    n_features: int
    feature_names: list[str] = field(default_factory=list)
    target: str = ""
    val_mse: float = float("nan")
    train_loss: list[float] = field(default_factory=list)

    kind = "mlp"

    def _inputs(self, rows, nu=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(rows, dtype=float))
        if X.shape[1] == self.n_features + 1 and nu is None:
            return X
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        col = np.zeros(len(X)) if nu is None else np.broadcast_to(np.asarray(nu, float), (len(X),))
        return np.column_stack([X, col])

    def predict(self, rows, nu=None) -> np.ndarray:
        """Predictions with the noise input at ``nu`` (0 by default).

        Rows that already carry the noise column (width n_features + 1) are used as is.
        """
        out, _ = forward(self.weights, self.biases, self._inputs(rows, nu), self.activation)
        return out

    def input_gradient(self, rows, nu=None) -> np.ndarray:
        """d prediction / d input for each row, over the observed features and the noise column."""
        Z = self._inputs(rows, nu)
        _, cache = forward(self.weights, self.biases, Z, self.activation)
        delta = np.ones((len(Z), 1))
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta @ self.weights[i].T
            if i > 0:
                z, a = cache[i]
                delta = delta * _act_grad(self.activation, z, a)
        return delta

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "activation": self.activation,
            "noise_sd": self.noise_sd,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "target": self.target,
            "val_mse": None if np.isnan(self.val_mse) else self.val_mse,
            "layers": [
                {"shape": list(W.shape), "weights": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        Ws = [np.array(l["weights"], dtype=float).reshape(l["shape"]) for l in doc["layers"]]
        bs = [np.array(l["bias"], dtype=float) for l in doc["layers"]]
        val = doc.get("val_mse")
        return cls(Ws, bs, doc["activation"], float(doc["noise_sd"]), int(doc["n_features"]),
                   list(doc.get("feature_names", [])), doc.get("target", ""),
                   float("nan") if val is None else float(val))


def split_indices(n: int, rng, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    k = min(n - 1, max(1, int(round(train_fraction * n))))
    return perm[:k], perm[k:]


def fit_mlp(X: np.ndarray, y: np.ndarray, params: MlpParams = MlpParams(), rng=None,
            validation: bool = True) -> MlpModel:
    """Train with Adam on mini-batches; the last 20% of a random split is held out
    to report ``val_mse`` unless ``validation`` is False."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(rng)
    n, p = X.shape
    if validation and n >= 5:
        tr, va = split_indices(n, rng)
    else:
        tr, va = np.arange(n), np.arange(0)
    Ws, bs = init_weights([p + 1, *params.hidden, 1], rng)
    model = MlpModel(Ws, bs, params.activation, params.noise_sd, p)
    state = [np.zeros_like(a) for a in Ws + bs]
    state2 = [np.zeros_like(a) for a in Ws + bs]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    Xtr, ytr = X[tr], y[tr]
    for _ in range(params.epochs):
        perm = rng.permutation(len(tr))
        total = 0.0
        for start in range(0, len(tr), params.batch_size):
            idx = perm[start:start + params.batch_size]
            nu = params.noise_sd * rng.standard_normal(len(idx))
            Z = np.column_stack([Xtr[idx], nu])
            loss, gWs, gbs = loss_and_grads(model.weights, model.biases, Z, ytr[idx], params.activation)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at step {step}")
            step += 1
            total += loss * len(idx)
            theta = model.weights + model.biases
            for k, (w, g) in enumerate(zip(theta, gWs + gbs)):
                state[k] = b1 * state[k] + (1 - b1) * g
                state2[k] = b2 * state2[k] + (1 - b2) * g * g
                mhat = state[k] / (1 - b1**step)
                vhat = state2[k] / (1 - b2**step)
                w -= params.learning_rate * mhat / (np.sqrt(vhat) + eps)
        model.train_loss.append(total / len(tr))
    if len(va):
        model.val_mse = float(np.mean((model.predict(X[va]) - y[va]) ** 2))
        if not np.isfinite(model.val_mse):
            raise TrainingDivergedError("non-finite validation loss")
    return model


def train_mlp(d, target: str, params: MlpParams = MlpParams(), rng=None) -> MlpModel:
    if d.n_rows < 10:
        raise ValueError(f"need at least 10 rows to train, got {d.n_rows}")
    names, X, y = d.features_for(target)
    model = fit_mlp(X, y, params, rng)
    model.feature_names = names
    model.target = target
    return model
