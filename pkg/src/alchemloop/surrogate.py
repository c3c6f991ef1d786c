"""Fold-ensembled feed-forward property predictors.

Each model is an ensemble of small two-hidden-layer tanh networks, one per
fold.  Folds rotate a shuffled 80/10/10 train/validation/test partition;
every fold keeps the weights of its best validation epoch.  Regression
targets are standardized with the training-set mean and std; the stability
classifier has a sigmoid output trained with cross-entropy.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from alchemloop.errors import DegenerateTargets, DimensionMismatch, EmptyTestSet, InsufficientData

CHECKPOINT_VERSION = "alchemloop-surrogate/1"
MIN_EXAMPLES = 50


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    folds: int = 5
    learning_rate: float = 0.05
    batch_size: int = 16
    hidden: int = 64
    weight_decay: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.fractions}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")
        if self.batch_size < 1 or self.hidden < 1 or not self.learning_rate > 0:
            raise ValueError("batch_size, hidden and learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# network


def init_params(n_in: int, hidden: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Glorot-uniform weights for in -> hidden -> hidden -> 1, zero biases."""
    sizes = [n_in, hidden, hidden, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Raw network output (pre-sigmoid for classifiers), shape ``(n,)``."""
    W1, b1, W2, b2, W3, b3 = params
    h1 = np.tanh(X @ W1 + b1)
    h2 = np.tanh(h1 @ W2 + b2)
    return (h2 @ W3 + b3)[:, 0]


def loss_and_grads(params, X, y, task):
    """Mean loss and its analytic gradient with respect to every parameter.

    Regression uses half mean squared error; classification uses mean
    binary cross-entropy on the sigmoid of the output.
    """
    W1, b1, W2, b2, W3, b3 = params
    n = X.shape[0]
    h1 = np.tanh(X @ W1 + b1)
    h2 = np.tanh(h1 @ W2 + b2)
    out = (h2 @ W3 + b3)[:, 0]
    if task == "regression":
        err = out - y
        loss = 0.5 * float(np.mean(err ** 2))
        d_out = err / n
    else:
        p = _sigmoid(out)
        eps = 1e-12
        loss = -float(np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
        d_out = (p - y) / n
    d_out = d_out[:, None]
    gW3 = h2.T @ d_out
    gb3 = d_out.sum(axis=0)
    d_h2 = (d_out @ W3.T) * (1 - h2 ** 2)
    gW2 = h1.T @ d_h2
    gb2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ W2.T) * (1 - h1 ** 2)
    gW1 = X.T @ d_h1
    gb1 = d_h1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# model


@dataclass
class SurrogateModel:
    """Fold ensemble plus target normalization.

    ``predict`` averages the fold outputs: de-standardized values for
    regression, sigmoid probabilities for classification.
    """

    task: str
    fold_params: list[list[np.ndarray]]
    y_mean: float = 0.0
    y_std: float = 1.0
    input_dim: int = 0
    config: TrainConfig = field(default_factory=TrainConfig)
    fold_splits: list = field(default_factory=list, repr=False)

    def fold_predictions(self, X: np.ndarray) -> np.ndarray:
        """Per-fold outputs, shape ``(folds, n)``."""
        X = self._check(X)
        outs = np.array([forward(p, X) for p in self.fold_params])
        if self.task == "classification":
            return _sigmoid(outs)
        return outs * self.y_std + self.y_mean

    def predict(self, X) -> np.ndarray | float:
        """Ensemble prediction for one vector (returns float) or a matrix."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = self.fold_predictions(X).mean(axis=0)
        if self.task == "classification":
            out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if single else out

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected feature length {self.input_dim}, got {X.shape[-1]}")
        return X

    # serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "version": CHECKPOINT_VERSION,
            "task": self.task,
            "input_dim": self.input_dim,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "config": self.config.to_dict(),
            "folds": [[_pack(p) for p in params] for params in self.fold_params],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported surrogate checkpoint version {d.get('version')!r}")
        folds = [[_unpack(p) for p in params] for params in d["folds"]]
        return cls(d["task"], folds, float(d["y_mean"]), float(d["y_std"]), int(d["input_dim"]),
                   TrainConfig.from_dict(d["config"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _pack(a: np.ndarray) -> dict:
    """Array as shape plus base64 of little-endian float64 bytes (exact round trip)."""
    data = np.ascontiguousarray(a, dtype="<f8").tobytes()
    return {"shape": list(a.shape), "f64": base64.b64encode(data).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(d["f64"]), dtype="<f8")
    return raw.reshape(d["shape"]).astype(float)


def fold_splits(n: int, cfg: TrainConfig, rng: np.random.Generator):
    """Index triples (train, val, test) for each fold.

    One shuffle is cut into ``folds`` blocks; fold ``k`` rotates the block
    order so every fold sees a different validation/test slice.
    """
    order = rng.permutation(n)
    f_train, f_val, _ = cfg.fractions
    n_train = int(round(f_train * n))
    n_val = int(round(f_val * n))
    splits = []
    for k in range(cfg.folds):
        shift = (k * n) // cfg.folds
        rolled = np.roll(order, -shift)
        splits.append((rolled[:n_train], rolled[n_train:n_train + n_val], rolled[n_train + n_val:]))
    return splits


def train(X, y, cfg: TrainConfig | None = None, task: str = "regression") -> SurrogateModel:
    """Train a fold ensemble on features ``X`` and targets ``y``.

    Raises
    ------
    InsufficientData
        Fewer than 50 examples, or a classifier target with one class.
    DegenerateTargets
        Regression targets with zero variance.
    """
    cfg = cfg or TrainConfig()
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X must be (n, d) with one target per row")
    n, d = X.shape
    if n < MIN_EXAMPLES:
        raise InsufficientData(f"need at least {MIN_EXAMPLES} examples, got {n}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("features and targets must be finite")
    if task == "classification":
        if set(np.unique(y)) - {0.0, 1.0}:
            raise ValueError("classification targets must be 0/1")
        if len(np.unique(y)) < 2:
            raise InsufficientData("classifier needs both classes")
        y_mean, y_std = 0.0, 1.0
        target = y
    else:
        y_mean, y_std = float(y.mean()), float(y.std())
        if not y_std > 0:
            raise DegenerateTargets("targets have zero variance")
        target = (y - y_mean) / y_std

    rng = np.random.default_rng(cfg.seed)
    splits = fold_splits(n, cfg, rng)
    fold_params = []
    for train_idx, val_idx, _ in splits:
        fold_params.append(_train_fold(X, target, train_idx, val_idx, cfg, task, rng))
    return SurrogateModel(task, fold_params, y_mean, y_std, d, cfg, splits)


def _train_fold(X, y, train_idx, val_idx, cfg, task, rng):
    params = init_params(X.shape[1], cfg.hidden, rng)
    # without a validation slice, selection falls back to the training loss
    check_idx = val_idx if len(val_idx) else train_idx
    best = [p.copy() for p in params]
    best_rmse = _rmse(params, X[check_idx], y[check_idx], task)
    for _ in range(cfg.epochs):
        perm = rng.permutation(train_idx)
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            _, grads = loss_and_grads(params, X[batch], y[batch], task)
            for k, (p, g) in enumerate(zip(params, grads)):
                if k % 2 == 0 and cfg.weight_decay:  # weights only, not biases
                    g = g + cfg.weight_decay * p
                p -= cfg.learning_rate * g
        rmse = _rmse(params, X[check_idx], y[check_idx], task)
        if rmse < best_rmse:
            best_rmse = rmse
            best = [p.copy() for p in params]
    return best


def _rmse(params, X, y, task):
    out = forward(params, X)
    if task == "classification":
        out = _sigmoid(out)
    return float(np.sqrt(np.mean((out - y) ** 2)))


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    n: int
    rmse: float | None = None
    precision: float | None = None
    recall: float | None = None
    auc: float | None = None

    def to_dict(self):
        return asdict(self)


def rmse(pred, true) -> float:
    pred, true = np.asarray(pred, dtype=float), np.asarray(true, dtype=float)
    if pred.size == 0:
        raise EmptyTestSet("RMSE of an empty set")
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def precision_recall(pred_flags, true_flags) -> tuple[float, float]:
    """Precision and recall of boolean flags.

    Precision is 0 when nothing is predicted positive; recall is 0 when
    there are no true positives to find.
    """
    p = np.asarray(pred_flags, dtype=bool)
    t = np.asarray(true_flags, dtype=bool)
    tp = int(np.sum(p & t))
    n_pred, n_true = int(p.sum()), int(t.sum())
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_true if n_true else 0.0
    return precision, recall


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties get mid-ranks)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def evaluate_regression(pred, true, top_threshold: float | None = None) -> EvalReport:
    """RMSE, plus precision/recall of ``value >= top_threshold`` when given."""
    pred, true = np.asarray(pred, dtype=float), np.asarray(true, dtype=float)
    if true.size == 0:
        raise EmptyTestSet("evaluation set is empty")
    report = {"n": int(true.size), "rmse": rmse(pred, true)}
    if top_threshold is not None:
        report["precision"], report["recall"] = precision_recall(pred >= top_threshold, true >= top_threshold)
    return EvalReport(**report)


def evaluate_top(pred_rho, pred_hof, true_rho, true_hof, rho_threshold, hof_threshold):
    """Precision/recall of the joint "top molecule" flag (both properties over threshold)."""
    true_rho = np.asarray(true_rho, dtype=float)
    if true_rho.size == 0:
        raise EmptyTestSet("evaluation set is empty")
    pred_flags = (np.asarray(pred_rho) >= rho_threshold) & (np.asarray(pred_hof) >= hof_threshold)
    true_flags = (true_rho >= rho_threshold) & (np.asarray(true_hof) >= hof_threshold)
    return precision_recall(pred_flags, true_flags)


def evaluate(model: SurrogateModel, X, y, top_threshold: float | None = None) -> EvalReport:
    """Evaluate a model on a labeled set.

    Regression models report RMSE (and top precision/recall when
    ``top_threshold`` is given); classifiers report probability RMSE, AUC,
    and precision/recall at 0.5.

    Raises
    ------
    EmptyTestSet
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptyTestSet("evaluation set is empty")
    pred = model.predict(X if X.ndim == 2 else X[None, :])
    pred = np.atleast_1d(pred)
    if model.task == "regression":
        return evaluate_regression(pred, y, top_threshold)
    precision, recall = precision_recall(pred >= 0.5, y >= 0.5)
    labels = y >= 0.5
    auc = roc_auc(pred, labels) if 0 < labels.sum() < labels.size else None
    return EvalReport(int(y.size), rmse(pred, y), precision, recall, auc)
