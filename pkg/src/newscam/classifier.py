"""Linear head trained with cross-entropy, AdamW and cosine decay."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

NUM_CLASSES = 2


@dataclass(frozen=True)
class LinearHead:
    W: np.ndarray  # (C, D)
    b: np.ndarray  # (C,)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def classes(self) -> int:
        return self.W.shape[0]

    def to_json(self, **extra) -> dict:
        out = {"W": self.W.tolist(), "b": self.b.tolist(), "dim": self.dim,
               "classes": self.classes}
        out.update(extra)
        return out

    def save(self, path, **extra):
        Path(path).write_text(json.dumps(self.to_json(**extra)) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> LinearHead:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        head = cls(np.asarray(obj["W"], dtype=np.float64), np.asarray(obj["b"], dtype=np.float64))
        if head.W.ndim != 2 or head.b.shape != (head.classes,) or head.dim != obj.get("dim", head.dim):
            raise ValueError(f"{path}: inconsistent head shapes")
        if not (np.all(np.isfinite(head.W)) and np.all(np.isfinite(head.b))):
            raise ValueError(f"{path}: head has non-finite parameters")
        return head


def init_head(dim: int, seed: int, classes: int = NUM_CLASSES) -> LinearHead:
    bound = 1.0 / math.sqrt(dim)
    W = np.random.default_rng(seed).uniform(-bound, bound, size=(classes, dim))
    return LinearHead(W, np.zeros(classes))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    weight_decay: float = 0.1
    epochs: int = 1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("lr, batch_size and epochs must be positive")


WEIGHT_DECAYS = (0.1, 0.001, 0.00001)
EPOCHS = (1, 2)


def logits(head: LinearHead, z) -> np.ndarray:
    """``W z + b`` for one vector or a batch of row vectors."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != head.dim:
        raise ValueError(f"representation dim {z.shape[-1]} != head dim {head.dim}")
    return z @ head.W.T + head.b


def log_softmax(y):
    y = np.asarray(y, dtype=np.float64)
    m = y.max(axis=-1, keepdims=True)
    return y - m - np.log(np.exp(y - m).sum(axis=-1, keepdims=True))


def softmax(y):
    return np.exp(log_softmax(y))


def cross_entropy(y, label) -> float | np.ndarray:
    """``-log softmax(y)[label]``; batched inputs give one loss per row."""
    lp = log_softmax(y)
    if lp.ndim == 1:
        return float(-lp[label])
    labels = np.asarray(label)
    return -lp[np.arange(len(lp)), labels]


def mean_loss(head: LinearHead, Z, labels) -> float:
    return float(np.mean(cross_entropy(logits(head, Z), labels)))


def grad(head: LinearHead, Z, labels) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the batch-mean cross-entropy with respect to W and b."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    if len(Z) == 0:
        raise ValueError("empty batch")
    delta = softmax(logits(head, Z))
    delta[np.arange(len(Z)), labels] -= 1.0
    delta /= len(Z)
    return delta.T @ Z, delta.sum(axis=0)


@dataclass
class AdamState:
    m_W: np.ndarray
    v_W: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray

    @classmethod
    def zeros_like(cls, head: LinearHead) -> AdamState:
        return cls(np.zeros_like(head.W), np.zeros_like(head.W),
                   np.zeros_like(head.b), np.zeros_like(head.b))


def adamw_step(head: LinearHead, grads, state: AdamState, t: int, lr_t: float,
               config: TrainConfig) -> tuple[LinearHead, AdamState]:
    """One AdamW update; weight decay hits W only, after the Adam step."""
    if t < 1:
        raise ValueError("step index t starts at 1")
    gW, gb = grads
    b1, b2 = config.betas
    m_W = b1 * state.m_W + (1 - b1) * gW
    v_W = b2 * state.v_W + (1 - b2) * gW ** 2
    m_b = b1 * state.m_b + (1 - b1) * gb
    v_b = b2 * state.v_b + (1 - b2) * gb ** 2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    W = head.W - lr_t * (m_W / c1) / (np.sqrt(v_W / c2) + config.eps)
    b = head.b - lr_t * (m_b / c1) / (np.sqrt(v_b / c2) + config.eps)
    W = W - lr_t * config.weight_decay * W
    return LinearHead(W, b), AdamState(m_W, v_W, m_b, v_b)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ValueError(f"need 0 <= step <= total_steps and total_steps >= 1, got {step}, {total_steps}")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainResult:
    head: LinearHead
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0


def train_head(Z, labels, config: TrainConfig, head: LinearHead | None = None) -> TrainResult:
    """Mini-batch AdamW over ``config.epochs`` passes with cosine decay.

    Batches are reshuffled each epoch from ``config.seed``; the final short
    batch is kept. ``epoch_losses`` holds the full training loss after each epoch.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(Z)
    if n == 0:
        raise ValueError("empty training set")
    if head is None:
        head = init_head(Z.shape[1], config.seed)
    state = AdamState.zeros_like(head)
    rng = np.random.default_rng(config.seed + 1)
    per_epoch = math.ceil(n / config.batch_size)
    total = config.epochs * per_epoch
    t = 0
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            g = grad(head, Z[idx], labels[idx])
            lr_t = cosine_lr(t, total, config.lr)
            t += 1
            head, state = adamw_step(head, g, state, t, lr_t, config)
        losses.append(mean_loss(head, Z, labels))
    return TrainResult(head, losses, t)


def predict(head: LinearHead, Z) -> np.ndarray:
    return np.argmax(logits(head, Z), axis=-1)


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(preds == labels))


@dataclass(frozen=True)
class Metrics:
    test_accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    confusion: tuple[tuple[int, ...], ...]  # rows: true class, cols: predicted

    def to_json(self) -> dict:
        return {"test_accuracy": self.test_accuracy, "precision": list(self.precision),
                "recall": list(self.recall), "confusion": [list(r) for r in self.confusion]}


def metrics(preds, labels, classes: int = NUM_CLASSES) -> Metrics:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    acc = accuracy(preds, labels)
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    diag = np.diag(cm)
    precision = tuple(float(diag[c] / col[c]) if col[c] else 0.0 for c in range(classes))
    recall = tuple(float(diag[c] / row[c]) if row[c] else 0.0 for c in range(classes))
    return Metrics(acc, precision, recall, tuple(tuple(int(v) for v in r) for r in cm))


@dataclass
class GridPoint:
    weight_decay: float
    epochs: int
    metrics: Metrics
    selection_score: float
    head: LinearHead = field(repr=False)
    epoch_losses: list[float] = field(default_factory=list, repr=False)


@dataclass
class LinearEvalReport:
    points: list[GridPoint]
    best: GridPoint
    selection: str

    def to_json(self) -> dict:
        return {
            "selection": self.selection,
            "grid": [{"weight_decay": p.weight_decay, "epochs": p.epochs,
                      "selection_score": p.selection_score, **p.metrics.to_json()}
                     for p in self.points],
            "best": {"weight_decay": self.best.weight_decay, "epochs": self.best.epochs,
                     **self.best.metrics.to_json()},
        }


def linear_evaluate(Z_train, y_train, Z_test, y_test, base: TrainConfig = TrainConfig(),
                    weight_decays=WEIGHT_DECAYS, epochs=EPOCHS, selection: str = "test",
                    val_fraction: float = 0.1) -> LinearEvalReport:
    """Train a fresh head per (weight_decay, epochs) pair and keep the best.

    ``selection="test"`` ranks grid points by test accuracy, as the reported
    protocol does. ``selection="validation"`` instead holds out
    ``val_fraction`` of the training set for ranking, then refits on it all.
    Ties go to the earlier grid point.
    """
    Z_train = np.asarray(Z_train, dtype=np.float64)
    Z_test = np.asarray(Z_test, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_test = np.asarray(y_test, dtype=np.int64)
    if len(Z_train) == 0 or len(Z_test) == 0:
        raise ValueError("linear evaluation needs non-empty train and test sets")
    if selection not in ("test", "validation"):
        raise ValueError(f"unknown selection mode {selection!r}")

    if selection == "validation":
        order = np.random.default_rng(base.seed + 2).permutation(len(Z_train))
        n_val = max(1, int(round(val_fraction * len(Z_train))))
        val_idx, fit_idx = order[:n_val], order[n_val:]
        if len(fit_idx) == 0:
            raise ValueError("training set too small for a validation split")

    points = []
    for wd, ep in product(weight_decays, epochs):
        cfg = replace(base, weight_decay=wd, epochs=ep)
        if selection == "validation":
            probe = train_head(Z_train[fit_idx], y_train[fit_idx], cfg).head
            score = accuracy(predict(probe, Z_train[val_idx]), y_train[val_idx])
        result = train_head(Z_train, y_train, cfg)
        m = metrics(predict(result.head, Z_test), y_test)
        if selection == "test":
            score = m.test_accuracy
        points.append(GridPoint(wd, ep, m, score, result.head, result.epoch_losses))
    best = max(points, key=lambda p: p.selection_score)  # max() keeps the first of ties
    return LinearEvalReport(points, best, selection)


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["betas"] = list(config.betas)
    return d


def epochs_for_steps(n_train: int, batch_size: int, target_steps: int) -> int:
    """Epoch count whose step total is closest to ``target_steps`` (at least 1)."""
    per_epoch = math.ceil(n_train / batch_size)
    return max(1, round(target_steps / per_epoch))
