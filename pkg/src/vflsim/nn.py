"""Dense multilayer perceptrons in plain NumPy.

Every network in the simulator (autoencoders, the estimation network, the
perturber and the classifier) is an :class:`Mlp`.  The module provides the
forward pass, backpropagation, per-sample parameter Jacobians, a plain SGD
step and a central-difference gradient oracle.

Flat parameter ordering (used by Jacobians and :meth:`Mlp.get_flat`) is
layer-major; inside a layer the weight matrix comes first in row-major order
(``W[out, in]``), followed by the bias vector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

ACTIVATIONS = ("identity", "tanh", "relu", "sigmoid")

_net_ids = itertools.count()


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ShapeError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size


class Mlp:
    """A stack of dense layers with per-layer activations."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ShapeError("an Mlp needs at least one layer")
        for layer in layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError("bias shape does not match weight rows")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"incompatible layers: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)
        self.uid = next(_net_ids)
        self.version = 0

    @classmethod
    def from_specs(cls, specs: Sequence[LayerSpec], rng: np.random.Generator) -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for spec in specs:
            limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
            w = rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim))
            layers.append(Layer(w, np.zeros(spec.out_dim), spec.activation))
        return cls(layers)

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "tanh",
        output_activation: str = "identity",
    ) -> "Mlp":
        """Build from a width list such as ``[16, 500, 200]``."""
        if len(sizes) < 2:
            raise ShapeError("need at least input and output sizes")
        specs = [
            LayerSpec(a, b, hidden_activation if i < len(sizes) - 2 else output_activation)
            for i, (a, b) in enumerate(zip(sizes, sizes[1:]))
        ]
        return cls.from_specs(specs, rng)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def param_count(self) -> int:
        return sum(layer.size for layer in self.layers)

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def touch(self) -> None:
        """Mark parameters as changed; outstanding caches become stale."""
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.param_count,):
            raise ShapeError(f"expected {self.param_count} parameters, got {flat.shape}")
        pos = 0
        for layer in self.layers:
            nw = layer.weight.size
            layer.weight[...] = flat[pos : pos + nw].reshape(layer.weight.shape)
            pos += nw
            layer.bias[...] = flat[pos : pos + layer.out_dim]
            pos += layer.out_dim
        self.touch()

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weight": l.weight.tolist(), "bias": l.bias.tolist(), "activation": l.activation}
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        return cls(
            [
                Layer(np.asarray(d["weight"], dtype=float), np.asarray(d["bias"], dtype=float), d["activation"])
                for d in data["layers"]
            ]
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]

    def __repr__(self) -> str:
        acts = ",".join(l.activation for l in self.layers)
        return f"Mlp(sizes={self.sizes}, activations=[{acts}])"


@dataclass
class Cache:
    """Per-layer inputs, pre-activations and outputs from one forward pass."""

    net_uid: int
    net_version: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


Grads = list  # list of (dW, db) tuples aligned with net.layers


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def forward(net: Mlp, x) -> tuple[np.ndarray, Cache]:
    x = _as_matrix(x)
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {net.in_dim}")
    cache = Cache(net.uid, net.version)
    a = x
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        out = _activate(layer.activation, z)
        cache.inputs.append(a)
        cache.pre.append(z)
        cache.post.append(out)
        a = out
    return a, cache


def _check_cache(net: Mlp, cache: Cache) -> None:
    if cache.net_uid != net.uid or cache.net_version != net.version:
        raise ContractError("stale cache: network changed since the forward pass")


def _deltas(net: Mlp, cache: Cache, upstream: np.ndarray):
    """Yield (layer_index, delta at pre-activation) from the top layer down,
    and finally the gradient w.r.t. the network input."""
    g = upstream
    deltas = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = g * _activation_grad(layer.activation, cache.pre[i], cache.post[i])
        deltas[i] = delta
        g = delta @ layer.weight
    return deltas, g


def backward(net: Mlp, cache: Cache, upstream) -> tuple[Grads, np.ndarray]:
    """Backpropagate ``upstream`` (dLoss/dOutput, N x out).

    Parameter gradients are summed over rows, so a mean-loss upstream (one
    that already carries the 1/N factor) yields mean gradients.
    """
    _check_cache(net, cache)
    upstream = _as_matrix(upstream)
    if upstream.shape != cache.post[-1].shape:
        raise ShapeError(f"upstream shape {upstream.shape} != output shape {cache.post[-1].shape}")
    deltas, input_grad = _deltas(net, cache, upstream)
    grads = [(d.T @ a, d.sum(axis=0)) for d, a in zip(deltas, cache.inputs)]
    return grads, input_grad


def flatten_grads(grads: Grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


def unflatten_grads(net: Mlp, flat: np.ndarray) -> Grads:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (net.param_count,):
        raise ShapeError(f"expected {net.param_count} gradient entries, got {flat.shape}")
    out, pos = [], 0
    for layer in net.layers:
        nw = layer.weight.size
        dw = flat[pos : pos + nw].reshape(layer.weight.shape)
        pos += nw
        db = flat[pos : pos + layer.out_dim]
        pos += layer.out_dim
        out.append((dw, db))
    return out


def per_row_grads(net: Mlp, cache: Cache, upstream) -> np.ndarray:
    """Unreduced parameter gradients, one flat row per batch row (N x K)."""
    _check_cache(net, cache)
    upstream = _as_matrix(upstream)
    deltas, _ = _deltas(net, cache, upstream)
    n = upstream.shape[0]
    parts = []
    for d, a in zip(deltas, cache.inputs):
        parts.append(np.einsum("no,ni->noi", d, a).reshape(n, -1))
        parts.append(d)
    return np.concatenate(parts, axis=1)


def per_sample_jacobian(net: Mlp, x) -> np.ndarray:
    """d output / d parameters for one sample, shape (out_dim, param_count)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != net.in_dim:
        raise ShapeError(f"sample has {x.shape[0]} features, network expects {net.in_dim}")
    rows = np.repeat(x[None, :], net.out_dim, axis=0)
    _, cache = forward(net, rows)
    return per_row_grads(net, cache, np.eye(net.out_dim))


def batch_jacobians(net: Mlp, x) -> np.ndarray:
    """Per-sample Jacobians stacked over a batch, shape (N, out_dim, param_count)."""
    x = _as_matrix(x)
    return np.stack([per_sample_jacobian(net, row) for row in x]) if len(x) else np.zeros(
        (0, net.out_dim, net.param_count)
    )


def sgd_step(net: Mlp, grads: Grads, lr: float) -> Mlp:
    """In place: every parameter ``theta <- theta - lr * g``."""
    if len(grads) != len(net.layers):
        raise ShapeError("gradient list is not aligned with the network layers")
    for layer, (dw, db) in zip(net.layers, grads):
        if dw.shape != layer.weight.shape or np.shape(db) != layer.bias.shape:
            raise ShapeError("gradient shapes do not match layer parameters")
        layer.weight -= lr * dw
        layer.bias -= lr * db
    net.touch()
    return net


def finite_diff_check(
    net: Mlp,
    x,
    loss: Callable[[np.ndarray], float],
    loss_grad: Callable[[np.ndarray], np.ndarray] | None = None,
    step: float = 1e-5,
    rel_floor: float = 0.0,
) -> float:
    """Max relative error between backprop and central differences.

    ``loss`` maps the network output to a scalar.  When ``loss_grad`` is not
    given, dLoss/dOutput is itself taken by central differences.  The
    denominator is floored at ``1e-8`` and at ``rel_floor`` times the largest
    numeric gradient entry; large networks have many entries too small for
    central differences to resolve, and a nonzero ``rel_floor`` keeps those
    from dominating the maximum.
    """
    x = _as_matrix(x)
    out, cache = forward(net, x)
    if loss_grad is not None:
        g_out = np.asarray(loss_grad(out), dtype=float)
    else:
        g_out = np.zeros_like(out)
        for idx in np.ndindex(out.shape):
            plus, minus = out.copy(), out.copy()
            plus[idx] += step
            minus[idx] -= step
            g_out[idx] = (loss(plus) - loss(minus)) / (2 * step)
    analytic = flatten_grads(backward(net, cache, g_out)[0])

    theta = net.get_flat()
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + step
        net.set_flat(theta)
        lp = loss(forward(net, x)[0])
        theta[k] = orig - step
        net.set_flat(theta)
        lm = loss(forward(net, x)[0])
        theta[k] = orig
        numeric[k] = (lp - lm) / (2 * step)
    net.set_flat(theta)

    floor = max(1e-8, rel_floor * float(np.abs(numeric).max(initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0


def near_kink(net: Mlp, x, margin: float = 1e-3) -> bool:
    """True when a ReLU pre-activation lies within ``margin`` of zero, where
    central differences straddle the kink and stop being a valid oracle."""
    _, cache = forward(net, x)
    return any(
        layer.activation == "relu" and np.any(np.abs(z) < margin) for layer, z in zip(net.layers, cache.pre)
    )


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator | None):
    """Index batches over ``range(n)``; shuffled when ``rng`` is given."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]
