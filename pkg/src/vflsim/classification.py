"""Per-timestamp classifier trained with distillation plus weighted cross-entropy.

At ``t = 0`` the classifier is trained with cross-entropy alone.  Later
timestamps start from a copy of the previous snapshot, which is frozen and
acts as teacher; the objective is::

    lam * distill(teacher / F, student / F) + (1 - lam) * weighted_ce(student)

Both terms are batch means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .encoding import check_epoch
from .errors import ShapeError

CLASSIFIER_HIDDEN = 100


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 2.0
    lam: float = 0.95
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")


@dataclass
class ClassifierSnapshot:
    net: nn.Mlp
    timestamp: int
    loss_trace: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.net.out_dim

    def logits(self, reps) -> np.ndarray:
        return self.net(reps)

    def predict_proba(self, reps) -> np.ndarray:
        return softened_softmax(self.logits(reps), 1.0)

    def predict(self, reps) -> np.ndarray:
        return np.argmax(self.logits(reps), axis=1)

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "net": self.net.to_dict(), "loss_trace": self.loss_trace}

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierSnapshot":
        return cls(nn.Mlp.from_dict(data["net"]), int(data["timestamp"]), list(data.get("loss_trace", [])))


def save_snapshots(snapshots, path) -> None:
    """One JSON checkpoint holding every snapshot, keyed by timestamp."""
    Path(path).write_text(json.dumps({"version": 1, "snapshots": {str(s.timestamp): s.to_dict() for s in snapshots}}))


def load_snapshots(path) -> dict[int, ClassifierSnapshot]:
    data = json.loads(Path(path).read_text())
    return {int(t): ClassifierSnapshot.from_dict(d) for t, d in data["snapshots"].items()}


def build_classifier(in_dim: int, n_classes: int, rng: np.random.Generator, hidden: int = CLASSIFIER_HIDDEN) -> nn.Mlp:
    return nn.Mlp.build([in_dim, hidden, n_classes], rng)


def concat_reps(r_a, r_b_hat) -> np.ndarray:
    r_a = np.asarray(r_a, dtype=float)
    r_b_hat = np.asarray(r_b_hat, dtype=float)
    if r_b_hat.ndim == 1 and r_b_hat.size == 0:
        r_b_hat = np.zeros((r_a.shape[0], 0))
    if r_a.shape[0] != r_b_hat.shape[0]:
        raise ShapeError(f"row mismatch {r_a.shape[0]} vs {r_b_hat.shape[0]}")
    return np.hstack([r_a, r_b_hat])


def softened_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=float) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits, temperature: float) -> np.ndarray:
    z = np.asarray(logits, dtype=float) / temperature
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def distill_loss(teacher_logits, student_logits, temperature: float = 2.0) -> float:
    """Mean over samples of the cross-entropy between softened distributions."""
    t = np.asarray(teacher_logits, dtype=float)
    s = np.asarray(student_logits, dtype=float)
    if t.shape != s.shape:
        raise ShapeError(f"shape mismatch {t.shape} vs {s.shape}")
    if t.shape[0] == 0:
        return 0.0
    p = softened_softmax(t, temperature)
    return float(-np.sum(p * _log_softmax(s, temperature)) / t.shape[0])


def ce_loss(labels_onehot, student_logits, weights=None) -> float:
    """Mean over samples of -sum_c w_c y_c log softmax(student)_c."""
    y = np.asarray(labels_onehot, dtype=float)
    s = np.asarray(student_logits, dtype=float)
    if y.shape != s.shape:
        raise ShapeError(f"shape mismatch {y.shape} vs {s.shape}")
    if y.shape[0] == 0:
        return 0.0
    w = np.ones(y.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    return float(-np.sum(w * y * _log_softmax(s, 1.0)) / y.shape[0])


def combined_loss(distill: float, ce: float, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * distill + (1.0 - lam) * ce


def objective_and_grad(student_logits, labels_onehot, teacher_logits, cfg: DistillConfig, weights=None):
    """Combined loss and its gradient w.r.t. the student logits.

    ``teacher_logits=None`` means pure cross-entropy (the ``t = 0`` case).
    """
    s = np.asarray(student_logits, dtype=float)
    y = np.asarray(labels_onehot, dtype=float)
    n = s.shape[0]
    w = np.ones(s.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    wy = w * y
    ce = ce_loss(y, s, w)
    # d/ds of -sum w_c y_c log softmax(s)_c = softmax(s) * sum_c(w_c y_c) - w y
    g_ce = (softened_softmax(s, 1.0) * wy.sum(axis=1, keepdims=True) - wy) / n
    if teacher_logits is None:
        return ce, g_ce
    F = cfg.temperature
    d = distill_loss(teacher_logits, s, F)
    p = softened_softmax(teacher_logits, F)
    g_d = (softened_softmax(s, F) - p) / (F * n)
    return combined_loss(d, ce, cfg.lam), cfg.lam * g_d + (1.0 - cfg.lam) * g_ce


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def inverse_frequency_weights(labels, n_classes: int) -> np.ndarray:
    """w_c = N / (C * N_c); classes absent from ``labels`` get weight 1."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    w = np.ones(n_classes)
    present = counts > 0
    w[present] = len(labels) / (n_classes * counts[present])
    return w


def train_classifier_t(
    prev: ClassifierSnapshot | None,
    reps,
    labels,
    cfg: DistillConfig,
    epochs: int,
    lr: float,
    seed=0,
    batch_size: int = 128,
    n_classes: int | None = None,
    init: nn.Mlp | None = None,
    timestamp: int | None = None,
) -> ClassifierSnapshot:
    """Train the classifier for one timestamp.

    With ``prev`` given, the student starts as a copy of ``prev.net`` and the
    frozen ``prev`` supplies teacher logits on each mini-batch.  Without
    ``prev`` the student starts from ``init`` (or a fresh network) and trains
    on cross-entropy only.  ``prev`` is never modified.
    """
    x = np.asarray(reps, dtype=float)
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    if prev is not None:
        net = prev.net.copy()
        n_classes = prev.n_classes
    elif init is not None:
        net = init.copy()
        n_classes = init.out_dim
    else:
        if n_classes is None:
            raise ValueError("n_classes is required when training from scratch")
        net = build_classifier(x.shape[1], n_classes, rng)
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"reps have {x.shape[1]} columns, classifier expects {net.in_dim}")
    y = one_hot(labels, n_classes)
    w = None if cfg.class_weights is None else np.asarray(cfg.class_weights, dtype=float)
    teacher_all = prev.logits(x) if (prev is not None and len(x)) else None

    def full_objective():
        if not len(x):
            return 0.0
        return objective_and_grad(net(x), y, teacher_all, cfg, w)[0]

    trace = [full_objective()]
    for _ in range(epochs):
        for idx in nn.iterate_minibatches(len(x), batch_size, rng):
            logits, cache = nn.forward(net, x[idx])
            teacher = None if prev is None else prev.logits(x[idx])
            _, g = objective_and_grad(logits, y[idx], teacher, cfg, w)
            grads, _ = nn.backward(net, cache, g)
            nn.sgd_step(net, grads, lr)
        trace.append(full_objective())
        if not np.isfinite(trace[-1]):
            check_epoch(trace, "classifier")
    t = timestamp if timestamp is not None else (0 if prev is None else prev.timestamp + 1)
    return ClassifierSnapshot(net, t, trace)
