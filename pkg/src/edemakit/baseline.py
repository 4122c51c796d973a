"""Linear-softmax severity classifier trained with class-weighted cross-entropy.

This is a small reference model over precomputed feature vectors. It is
enough to produce the per-image probability scores the metrics suite
consumes, and the objective is convex so zero initialization gives a
deterministic, well-defined optimum.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from edemakit.metrics.roc import ScoredSample
from edemakit.severity import N_LEVELS

WEIGHT_MODES = ("uniform", "inverse_frequency", "explicit")


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}: loss or parameters are not finite")
        self.epoch = epoch


def class_weights(counts: Sequence[int], mode: str = "inverse_frequency",
                  explicit: Optional[Sequence[float]] = None) -> np.ndarray:
    """Per-class loss weights.

    ``inverse_frequency`` gives N / (K * n_c), so balanced classes get weight 1.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (N_LEVELS,) or (counts < 0).any():
        raise ValueError(f"counts must be {N_LEVELS} non-negative integers")
    if mode == "uniform":
        return np.ones(N_LEVELS)
    if mode == "inverse_frequency":
        if (counts == 0).any():
            missing = [c for c in range(N_LEVELS) if counts[c] == 0]
            raise ValueError(f"inverse_frequency weights need every class present; missing {missing}")
        return counts.sum() / (N_LEVELS * counts.astype(float))
    if mode == "explicit":
        if explicit is None:
            raise ValueError("explicit weight mode needs four weights")
        w = np.asarray(explicit, dtype=float)
        if w.shape != (N_LEVELS,) or not np.isfinite(w).all() or (w <= 0).any():
            raise ValueError("explicit weights must be four finite positive numbers")
        return w
    raise ValueError(f"unknown weight mode {mode!r}; choose from {', '.join(WEIGHT_MODES)}")


@dataclass(frozen=True)
class ModelParams:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or W.shape[0] != N_LEVELS or b.shape != (N_LEVELS,):
            raise ValueError(f"W must be {N_LEVELS} x d and b length {N_LEVELS}")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(np.zeros((N_LEVELS, d)), np.zeros(N_LEVELS))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 300
    batch: Union[str, int] = "full"
    seed: int = 0
    weight_mode: str = "inverse_frequency"
    explicit_weights: Optional[tuple] = None
    l2: float = 0.0

    def __post_init__(self):
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be a positive finite number")
        if isinstance(self.epochs, bool) or not isinstance(self.epochs, int) or self.epochs < 1:
            raise ValueError("epochs must be an integer >= 1")
        if self.batch != "full" and (isinstance(self.batch, bool) or not isinstance(self.batch, int) or self.batch < 1):
            raise ValueError("batch must be 'full' or a positive integer")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.explicit_weights is not None:
            object.__setattr__(self, "explicit_weights", tuple(float(w) for w in self.explicit_weights))


def _check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("features must be a non-empty n x d matrix")
    if not np.isfinite(X).all():
        raise ValueError("feature values must be finite")
    return X


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def weighted_ce_loss_and_grad(params: ModelParams, X, y, weights, l2: float = 0.0):
    """Mean class-weighted cross-entropy and its exact gradient.

    Returns ``(loss, grad_W, grad_b)``. The optional L2 term is
    ``0.5 * l2 * ||W||^2`` and leaves the bias unpenalized.
    """
    X = _check_features(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[1] != params.d:
        raise ValueError(f"feature dimension {X.shape[1]} does not match model dimension {params.d}")
    if y.shape != (X.shape[0],) or y.min() < 0 or y.max() >= N_LEVELS:
        raise ValueError("labels must be one 0-3 integer per row")
    w = np.asarray(weights, dtype=float)
    n = X.shape[0]
    logp = _log_softmax(X @ params.W.T + params.b)
    rows = np.arange(n)
    wy = w[y]
    loss = float(-(wy * logp[rows, y]).sum() / n)
    g = np.exp(logp)
    g[rows, y] -= 1.0
    g *= (wy / n)[:, None]
    grad_W = g.T @ X
    grad_b = g.sum(axis=0)
    if l2:
        loss += 0.5 * l2 * float((params.W ** 2).sum())
        grad_W = grad_W + l2 * params.W
    return loss, grad_W, grad_b


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    loss_trace: tuple
    weights: tuple


def train(X, y, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Gradient descent from zero parameters.

    Mini-batch order comes from ``numpy.random.default_rng(config.seed)``.
    The loss trace holds the full-data objective after each epoch.
    """
    X = _check_features(X)
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=N_LEVELS)
    w = class_weights(counts, config.weight_mode, config.explicit_weights)
    n = X.shape[0]
    rng = np.random.default_rng(config.seed)
    params = ModelParams.zeros(X.shape[1])
    W, b = params.W.copy(), params.b.copy()
    trace = []
    # overflow surfaces as non-finite values and is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            if config.batch == "full":
                batches = [np.arange(n)]
            else:
                order = rng.permutation(n)
                batches = [order[i:i + config.batch] for i in range(0, n, config.batch)]
            for idx in batches:
                _, gW, gb = weighted_ce_loss_and_grad(_unchecked(W, b), X[idx], y[idx], w, config.l2)
                W -= config.learning_rate * gW
                b -= config.learning_rate * gb
                if not (np.isfinite(W).all() and np.isfinite(b).all()):
                    raise TrainingDivergedError(epoch)
            loss, _, _ = weighted_ce_loss_and_grad(_unchecked(W, b), X, y, w, config.l2)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            trace.append(loss)
    return TrainResult(ModelParams(W, b), tuple(trace), tuple(float(v) for v in w))


def _unchecked(W, b) -> ModelParams:
    # skip re-validation inside the training loop; finiteness is checked per step
    p = object.__new__(ModelParams)
    object.__setattr__(p, "W", W)
    object.__setattr__(p, "b", b)
    return p


def predict_scores(params: ModelParams, X) -> np.ndarray:
    """Softmax probabilities, one row of four per feature vector."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = _check_features(X[None, :] if single else X)
    if X.shape[1] != params.d:
        raise ValueError(f"feature dimension {X.shape[1]} does not match model dimension {params.d}")
    p = np.exp(_log_softmax(X @ params.W.T + params.b))
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if single else p


def scored_samples(image_ids: Sequence[str], labels: Sequence[int], probs: np.ndarray) -> list[ScoredSample]:
    return [ScoredSample(i, int(t), tuple(float(v) for v in p)) for i, t, p in zip(image_ids, labels, probs)]


def format_features(image_ids: Sequence[str], X) -> str:
    X = np.asarray(X, dtype=float)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["image_id", *(f"f{j}" for j in range(X.shape[1]))])
    for iid, row in zip(image_ids, X):
        w.writerow([iid, *(repr(float(v)) for v in row)])
    return out.getvalue()


def parse_features(text: str) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "image_id" or len(header) < 2:
        raise ValueError("features header must be image_id,f0,...")
    d = len(header) - 1
    if header[1:] != [f"f{j}" for j in range(d)]:
        raise ValueError("feature columns must be named f0..f{d-1} in order")
    ids, rows, seen = [], [], set()
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != d + 1:
            raise ValueError(f"line {lineno}: expected {d + 1} fields, got {len(row)}")
        if row[0] in seen:
            raise ValueError(f"line {lineno}: duplicate image_id {row[0]!r}")
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: feature values must be numbers") from None
        if not all(np.isfinite(vals)):
            raise ValueError(f"line {lineno}: feature values must be finite")
        seen.add(row[0])
        ids.append(row[0])
        rows.append(vals)
    return ids, np.array(rows, dtype=float).reshape(len(rows), d)


def read_features(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_features(fh.read())


def model_to_json(result: TrainResult, config: TrainConfig) -> str:
    obj = {
        "W": result.params.W.tolist(),
        "b": result.params.b.tolist(),
        "d": result.params.d,
        "config": asdict(config),
        "class_weights": list(result.weights),
        "final_loss": result.loss_trace[-1],
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def model_from_json(text: str) -> ModelParams:
    obj = json.loads(text)
    params = ModelParams(np.array(obj["W"], dtype=float), np.array(obj["b"], dtype=float))
    if params.d != obj.get("d", params.d):
        raise ValueError("model JSON: d does not match W")
    return params
