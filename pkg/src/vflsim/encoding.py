"""Per-party autoencoders that produce local feature representations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import ShapeError, TrainingError

CHECKPOINT_VERSION = 1

# A single epoch may rise by this factor over the previous one before
# training is declared divergent.
DIVERGENCE_RATIO = 1.10


@dataclass
class AutoEncoder:
    encoder: nn.Mlp
    decoder: nn.Mlp
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.encoder.out_dim != self.decoder.in_dim:
            raise ShapeError("encoder output dim must equal decoder input dim")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ShapeError("decoder must reconstruct the encoder input dim")

    @property
    def rep_dim(self) -> int:
        return self.encoder.out_dim

    @property
    def n_features(self) -> int:
        return self.encoder.in_dim

    @classmethod
    def build(cls, n_features: int, hidden: int, rep_dim: int, rng: np.random.Generator) -> "AutoEncoder":
        """features -> hidden (tanh) -> rep_dim (identity), mirrored decoder."""
        enc = nn.Mlp.build([n_features, hidden, rep_dim], rng)
        dec = nn.Mlp.build([rep_dim, hidden, n_features], rng)
        return cls(enc, dec)

    def save(self, path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "kind": "autoencoder",
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "loss_trace": self.loss_trace,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "AutoEncoder":
        payload = json.loads(Path(path).read_text())
        if payload.get("version") != CHECKPOINT_VERSION or payload.get("kind") != "autoencoder":
            raise ValueError(f"unsupported checkpoint {path}")
        return cls(
            nn.Mlp.from_dict(payload["encoder"]),
            nn.Mlp.from_dict(payload["decoder"]),
            list(payload.get("loss_trace", [])),
        )


def encode(ae: AutoEncoder, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[0] == 0:
        if x.shape[1] != ae.n_features:
            raise ShapeError(f"expected {ae.n_features} features, got {x.shape[1]}")
        return np.zeros((0, ae.rep_dim))
    return nn.forward(ae.encoder, x)[0]


def decode(ae: AutoEncoder, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim == 2 and r.shape[0] == 0:
        if r.shape[1] != ae.rep_dim:
            raise ShapeError(f"expected {ae.rep_dim} columns, got {r.shape[1]}")
        return np.zeros((0, ae.n_features))
    return nn.forward(ae.decoder, r)[0]


def mean_sq_error(x, x_hat) -> float:
    """(1/N) * sum_i ||x_i - x_hat_i||^2; zero for an empty batch."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.shape[0] == 0:
        return 0.0
    return float(np.sum((x - x_hat) ** 2) / x.shape[0])


ae_loss = mean_sq_error


def check_epoch(trace: list[float], what: str) -> None:
    """Raise TrainingError if the latest epoch loss is non-finite or jumped."""
    last = trace[-1]
    if not np.isfinite(last):
        raise TrainingError(f"{what} diverged: non-finite loss", {"loss_trace": list(trace)})
    if len(trace) > 1 and trace[-2] > 0 and last > DIVERGENCE_RATIO * trace[-2]:
        raise TrainingError(
            f"{what} diverged: epoch loss rose from {trace[-2]:.6g} to {last:.6g}",
            {"loss_trace": list(trace)},
        )


def train_autoencoder(
    ae: AutoEncoder,
    data,
    epochs: int = 50,
    batch_size: int = 128,
    lr: float = 0.005,
    seed: int | np.random.Generator = 0,
) -> AutoEncoder:
    """Mini-batch SGD on the reconstruction loss, in place.

    ``ae.loss_trace`` receives the full-data loss before training followed by
    one entry per epoch.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("autoencoder training needs a non-empty 2-D dataset")
    if x.shape[1] != ae.n_features:
        raise ShapeError(f"expected {ae.n_features} features, got {x.shape[1]}")
    rng = np.random.default_rng(seed)
    trace = [ae_loss(x, decode(ae, encode(ae, x)))]
    for _ in range(epochs):
        for idx in nn.iterate_minibatches(len(x), batch_size, rng):
            xb = x[idx]
            code, enc_cache = nn.forward(ae.encoder, xb)
            recon, dec_cache = nn.forward(ae.decoder, code)
            g_out = 2.0 * (recon - xb) / len(xb)
            dec_grads, g_code = nn.backward(ae.decoder, dec_cache, g_out)
            enc_grads, _ = nn.backward(ae.encoder, enc_cache, g_code)
            nn.sgd_step(ae.decoder, dec_grads, lr)
            nn.sgd_step(ae.encoder, enc_grads, lr)
        trace.append(ae_loss(x, decode(ae, encode(ae, x))))
        check_epoch(trace, "autoencoder")
    ae.loss_trace = trace
    return ae
