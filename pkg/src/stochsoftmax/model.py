"""Small clip classifiers with analytic gradients.

Both models map a clip feature vector to class logits and expose the same
surface: ``forward``, ``loss_and_grad``, ``sgd_step``, ``target_score``.
Parameters live in a dict of arrays so that the optimizer, the checkpoint
format and the gradient checks treat every model the same way.
"""

from __future__ import annotations

import numpy as np

from .pooling import log_softmax


def _check_labels(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.intp).reshape(-1)
    if y.size == 0:
        raise ValueError("empty batch")
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ValueError(f"label out of range for {n_classes} classes")
    return y


class _Classifier:
    params: dict
    n_classes: int
    dim: int

    def __init__(self):
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _features(self, features) -> tuple[np.ndarray, bool]:
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected features of dimension {self.dim}, got shape {np.shape(features)}")
        return x, single

    def forward(self, features) -> np.ndarray:
        x, single = self._features(features)
        z = self._logits(x)
        return z[0] if single else z

    def loss_and_grad(self, features, labels) -> tuple[float, dict]:
        """Mean cross-entropy over the batch and its exact gradients."""
        x, _ = self._features(features)
        y = _check_labels(labels, self.n_classes)
        if y.shape[0] != x.shape[0]:
            raise ValueError("features and labels differ in batch size")
        cache = {}
        z = self._logits(x, cache)
        logp = log_softmax(z, axis=1)
        rows = np.arange(y.size)
        loss = float(-logp[rows, y].mean())
        dz = np.exp(logp)
        dz[rows, y] -= 1.0
        dz /= y.size
        return loss, self._backward(x, dz, cache)

    def sgd_step(self, grads: dict, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        for k, g in grads.items():
            v = self.velocity[k]
            v *= momentum
            v += g
            if weight_decay and k.startswith("W"):
                v += weight_decay * self.params[k]
            self.params[k] -= lr * v
        return self

    def target_score(self, features, label: int) -> float:
        """Raw logit of ``label`` for a single clip."""
        if not 0 <= label < self.n_classes:
            raise ValueError(f"label {label} out of range for {self.n_classes} classes")
        return float(self.forward(features)[label])

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict):
        for k, v in params.items():
            if self.params[k].shape != np.shape(v):
                raise ValueError(f"shape mismatch for {k}")
            self.params[k] = np.array(v, dtype=np.float64)


class LinearClassifier(_Classifier):
    kind = "linear"

    def __init__(self, n_classes: int, dim: int, rng: np.random.Generator | None = None,
                 init_scale: float = 0.0):
        self.n_classes, self.dim = n_classes, dim
        w = np.zeros((n_classes, dim))
        if rng is not None and init_scale > 0:
            w = init_scale * rng.standard_normal((n_classes, dim))
        self.params = {"W": w, "b": np.zeros(n_classes)}
        super().__init__()

    def _logits(self, x, cache=None):
        return x @ self.params["W"].T + self.params["b"]

    def _backward(self, x, dz, cache):
        return {"W": dz.T @ x, "b": dz.sum(axis=0)}


class MLPClassifier(_Classifier):
    """One tanh hidden layer."""

    kind = "mlp"

    def __init__(self, n_classes: int, dim: int, hidden: int = 32,
                 rng: np.random.Generator | None = None, init_scale: float | None = None):
        self.n_classes, self.dim, self.hidden = n_classes, dim, hidden
        rng = rng if rng is not None else np.random.default_rng(0)
        s1 = init_scale if init_scale is not None else 1.0 / np.sqrt(dim)
        s2 = init_scale if init_scale is not None else 1.0 / np.sqrt(hidden)
        self.params = {
            "W1": s1 * rng.standard_normal((hidden, dim)),
            "b1": np.zeros(hidden),
            "W2": s2 * rng.standard_normal((n_classes, hidden)),
            "b2": np.zeros(n_classes),
        }
        super().__init__()

    def _logits(self, x, cache=None):
        h = np.tanh(x @ self.params["W1"].T + self.params["b1"])
        if cache is not None:
            cache["h"] = h
        return h @ self.params["W2"].T + self.params["b2"]

    def _backward(self, x, dz, cache):
        h = cache["h"]
        dh = (dz @ self.params["W2"]) * (1.0 - h * h)
        return {"W1": dh.T @ x, "b1": dh.sum(axis=0), "W2": dz.T @ h, "b2": dz.sum(axis=0)}


def build_model(kind: str, n_classes: int, dim: int, rng=None, hidden: int = 32):
    if kind == "linear":
        return LinearClassifier(n_classes, dim)
    if kind == "mlp":
        return MLPClassifier(n_classes, dim, hidden=hidden, rng=rng)
    raise ValueError(f"unknown model kind {kind!r}")


# -- checkpoints: flat decimal text, one "name dims..." header per array ----

def save_checkpoint(model: _Classifier, path):
    lines = [f"# {model.kind} {model.n_classes} {model.dim}"]
    for name in sorted(model.params):
        arr = model.params[name]
        lines.append(" ".join([name] + [str(s) for s in arr.shape]))
        lines.extend(repr(float(v)) for v in arr.ravel())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> _Classifier:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    kind, n_classes, dim = lines[0].lstrip("# ").split()
    arrays, i = {}, 1
    while i < len(lines):
        head = lines[i].split()
        shape = tuple(int(s) for s in head[1:])
        size = int(np.prod(shape))
        arrays[head[0]] = np.array([float(v) for v in lines[i + 1:i + 1 + size]]).reshape(shape)
        i += 1 + size
    hidden = arrays["W1"].shape[0] if kind == "mlp" else 32
    model = build_model(kind, int(n_classes), int(dim), hidden=hidden)
    model.load_params(arrays)
    return model
