"""Signed, quantized correction of estimated representations.

A perturber network looks at an estimate and decides, per coordinate,
whether to shift it down by ``delta``, leave it, or shift it up::

    eps   = delta * indicator(g(r_est))
    r_hat = r_est + eps

The indicator has zero gradient almost everywhere, so training uses a
straight-through estimator: the backward pass treats the indicator as the
identity where ``|z| <= STE_WINDOW`` and blocks the gradient outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .encoding import check_epoch
from .errors import ShapeError

DEFAULT_DELTA = {"dcc": 0.6, "bcw": 1.0, "eps5k": 0.6, "har": 0.5}
PERTURBER_HIDDEN = 100
STE_WINDOW = 1.0


@dataclass
class Perturber:
    net: nn.Mlp
    magnitude: float
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.magnitude > 0:
            raise ValueError(f"perturbation magnitude must be positive, got {self.magnitude}")
        if self.net.in_dim != self.net.out_dim:
            raise ShapeError("perturber must map d_B to d_B")

    @classmethod
    def build(cls, d_b: int, magnitude: float, rng: np.random.Generator, hidden: int = PERTURBER_HIDDEN):
        """Output layer starts at zero, so the untrained perturber applies no correction."""
        net = nn.Mlp.build([d_b, hidden, d_b], rng)
        net.layers[-1].weight[...] = 0.0
        return cls(net, float(magnitude))


def indicator(x) -> np.ndarray:
    """-1 below -0.5, +1 above 0.5, 0 on the closed band in between."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.5, 1.0, np.where(x < -0.5, -1.0, 0.0))


def perturb(perturber: Perturber, r_est) -> tuple[np.ndarray, np.ndarray]:
    r_est = np.asarray(r_est, dtype=float)
    if r_est.ndim != 2 or r_est.shape[1] != perturber.net.in_dim:
        raise ShapeError(f"expected N x {perturber.net.in_dim}, got {r_est.shape}")
    if r_est.shape[0] == 0:
        return np.zeros_like(r_est), r_est.copy()
    eps = perturber.magnitude * indicator(perturber.net(r_est))
    return eps, r_est + eps


def perturber_loss(r_true, r_corrected) -> float:
    t = np.asarray(r_true, dtype=float)
    c = np.asarray(r_corrected, dtype=float)
    if t.shape != c.shape:
        raise ShapeError(f"shape mismatch {t.shape} vs {c.shape}")
    return float(np.sum((t - c) ** 2) / t.shape[0]) if t.shape[0] else 0.0


def train_perturber(
    perturber: Perturber,
    r_true,
    r_est,
    epochs: int = 50,
    batch_size: int = 128,
    lr: float = 0.005,
    seed=0,
) -> Perturber:
    """Mini-batch SGD with the straight-through surrogate, in place.

    The parameters kept at the end are the best seen on the full training
    pairs (the starting point included), so the corrected loss never ends
    above the starting loss.
    """
    r_true = np.asarray(r_true, dtype=float)
    r_est = np.asarray(r_est, dtype=float)
    if r_true.shape != r_est.shape:
        raise ShapeError(f"misaligned pairs {r_true.shape} vs {r_est.shape}")
    rng = np.random.default_rng(seed)
    delta = perturber.magnitude
    net = perturber.net

    def full_loss():
        return perturber_loss(r_true, perturb(perturber, r_est)[1])

    trace = [full_loss()]
    best, best_flat = trace[0], net.get_flat()
    for _ in range(epochs):
        for idx in nn.iterate_minibatches(len(r_true), batch_size, rng):
            z, cache = nn.forward(net, r_est[idx])
            r_hat = r_est[idx] + delta * indicator(z)
            g_rhat = 2.0 * (r_hat - r_true[idx]) / len(idx)
            g_z = g_rhat * delta * (np.abs(z) <= STE_WINDOW)
            grads, _ = nn.backward(net, cache, g_z)
            nn.sgd_step(net, grads, lr)
        trace.append(full_loss())
        if not np.isfinite(trace[-1]):
            check_epoch(trace, "perturber")
        if trace[-1] < best:
            best, best_flat = trace[-1], net.get_flat()
    net.set_flat(best_flat)
    perturber.loss_trace = trace
    return perturber
