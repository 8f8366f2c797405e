"""Estimating the passive party's representation from the active party's.

The estimation network lives on party A and maps A's codes to an estimate
of B's codes.  It is trained by a four-message exchange per mini-batch:

1. A -> B  estimated representations for the batch;
2. B -> A  the loss gradient w.r.t. those estimates, encrypted under B's key;
3. A -> B  the encrypted parameter gradient, a vector-Jacobian product
           evaluated entirely on ciphertexts;
4. B -> A  the decrypted parameter gradient, which A applies with SGD.

:func:`claim1_nullspace_dim` measures how underdetermined B's per-coordinate
gradients are from A's point of view after step 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
import numpy as np

from . import nn
from .errors import AlignmentError, ShapeError, TrainingError
from .paillier import EncryptedArray, FixedPointOverflowError, KeyMismatchError
from .protocol import Channel, MsgType

REN_HIDDEN = (40, 40, 40, 40)

# Above this many Jacobian entries per batch the real-HE path refuses to run.
MAX_REAL_HE_JACOBIAN = 50_000_000


@dataclass
class RenModel:
    net: nn.Mlp

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    @property
    def out_dim(self) -> int:
        return self.net.out_dim

    @property
    def param_count(self) -> int:
        return self.net.param_count

    @classmethod
    def build(cls, d_a: int, d_b: int, rng: np.random.Generator, hidden=REN_HIDDEN) -> "RenModel":
        return cls(nn.Mlp.build([d_a, *hidden, d_b], rng))


def estimate(ren: RenModel, r_a) -> np.ndarray:
    r_a = np.asarray(r_a, dtype=float)
    if r_a.ndim == 2 and r_a.shape[0] == 0:
        if r_a.shape[1] != ren.in_dim:
            raise ShapeError(f"expected {ren.in_dim} columns, got {r_a.shape[1]}")
        return np.zeros((0, ren.out_dim))
    return nn.forward(ren.net, r_a)[0]


def ren_loss(r_b_true, r_b_est) -> float:
    """Mean over rows of the squared Euclidean error."""
    t = np.asarray(r_b_true, dtype=float)
    e = np.asarray(r_b_est, dtype=float)
    if t.shape != e.shape:
        raise ShapeError(f"shape mismatch {t.shape} vs {e.shape}")
    return float(np.sum((t - e) ** 2) / t.shape[0]) if t.shape[0] else 0.0


def grad_wrt_estimate(r_b_true, r_b_est) -> np.ndarray:
    """d ren_loss / d estimate = (2/m) * (estimate - true)."""
    t = np.asarray(r_b_true, dtype=float)
    e = np.asarray(r_b_est, dtype=float)
    if t.shape != e.shape:
        raise ShapeError(f"shape mismatch {t.shape} vs {e.shape}")
    return 2.0 * (e - t) / t.shape[0]


def encrypted_vjp(jacobians, enc_upstream: EncryptedArray, pk) -> EncryptedArray:
    """Sum_i Sum_j J_i[j, k] * [[u_ij]] for every parameter k, on ciphertexts.

    ``jacobians`` is (m, d_B, K) plaintext; ``enc_upstream`` is (m, d_B)
    encrypted under ``pk``.  The result carries scale ``2 * frac_bits``.
    """
    jac = np.asarray(jacobians, dtype=float)
    if enc_upstream.key_id != pk.key_id:
        raise KeyMismatchError(f"upstream under key {enc_upstream.key_id}, public key is {pk.key_id}")
    if jac.ndim != 3 or jac.shape[:2] != enc_upstream.shape:
        raise ShapeError(f"jacobians {jac.shape} do not match upstream {enc_upstream.shape}")
    m, d_b, k_params = jac.shape
    fb = enc_upstream.frac_bits
    n, nsq = pk.n, pk.nsquare
    if jac.size and np.abs(jac).max() * 2.0 ** (fb + 2) >= n:
        raise FixedPointOverflowError("Jacobian entries exceed the fixed-point headroom")

    cts = [gmpy2.mpz(int(v)) for v in enc_upstream.values.ravel()]
    inv = [gmpy2.invert(c, nsq) for c in cts]
    coeffs = np.rint(jac.reshape(m * d_b, k_params) * 2.0**fb)
    out = np.empty(k_params, dtype=object)
    for k in range(k_params):
        acc = gmpy2.mpz(1)
        col = coeffs[:, k]
        for idx in np.flatnonzero(col):
            e = int(col[idx])
            base = cts[idx] if e > 0 else inv[idx]
            acc = acc * gmpy2.powmod(base, abs(e), nsq) % nsq
        out[k] = int(acc)
    return EncryptedArray(out, pk.key_id, 2 * fb)


def mock_vjp(net: nn.Mlp, cache: nn.Cache, enc_upstream: EncryptedArray) -> EncryptedArray:
    """Mock-HE counterpart of :func:`encrypted_vjp` computed by backprop.

    Same value as contracting the per-sample Jacobians with the quantized
    upstream, without materializing the Jacobians.
    """
    upstream = np.asarray(enc_upstream.values, dtype=float)
    grads, _ = nn.backward(net, cache, upstream)
    return EncryptedArray(nn.flatten_grads(grads), enc_upstream.key_id, 2 * enc_upstream.frac_bits, mock=True)


@dataclass
class RenBatchTranscript:
    batch_index: int
    estimated_reps: np.ndarray
    encrypted_grad_wrt_estimate: EncryptedArray
    encrypted_param_grad: EncryptedArray
    decrypted_param_grad: np.ndarray
    message_seqs: list[int] = field(default_factory=list)


def run_batch_update(party_a, party_b, batch_ids, lr: float, channel: Channel, batch_index: int = 0):
    """One mini-batch of the four-step protocol; updates A's network in place."""
    # step 1, party A
    estimates = party_a.estimate_batch(batch_ids)
    m1 = channel.send(MsgType.ESTIMATED_REPS, {"ids": np.asarray(batch_ids), "reps": estimates}, "A", "B")

    # step 2, party B
    msg = channel.receive("B", MsgType.ESTIMATED_REPS)
    enc_u = party_b.encrypted_loss_grad(msg.payload["ids"], msg.payload["reps"])
    m2 = channel.send(MsgType.ENC_GRAD_WRT_ESTIMATE, enc_u, "B", "A")

    # step 3, party A
    msg = channel.receive("A", MsgType.ENC_GRAD_WRT_ESTIMATE)
    enc_grad = party_a.encrypted_param_grad(msg.payload)
    m3 = channel.send(MsgType.ENC_PARAM_GRAD, enc_grad, "A", "B")

    # step 4, party B then A
    msg = channel.receive("B", MsgType.ENC_PARAM_GRAD)
    plain = party_b.decrypt_param_grad(msg.payload)
    m4 = channel.send(MsgType.DEC_PARAM_GRAD, plain, "B", "A")
    msg = channel.receive("A", MsgType.DEC_PARAM_GRAD)
    party_a.apply_ren_grad(msg.payload, lr)

    return RenBatchTranscript(batch_index, estimates, enc_u, enc_grad, plain, [m.seq for m in (m1, m2, m3, m4)])


def train_ren(party_a, party_b, epochs: int, batch_size: int, lr: float, channel: Channel, seed=0):
    """Train A's estimation network on the aligned t=0 overlap.

    Returns ``(ren, loss_trace)``.  The trace holds the full-overlap loss at
    initialization and after each epoch; it is a simulator diagnostic and
    sends no messages.
    """
    ids_a = np.asarray(party_a.overlap_ids(), dtype=int)
    ids_b = np.asarray(party_b.held_ids(), dtype=int)
    if len(ids_a) != len(ids_b) or not np.array_equal(np.sort(ids_a), np.sort(ids_b)):
        raise AlignmentError(f"A's overlap ({len(ids_a)}) and B's data ({len(ids_b)}) are not aligned")
    rng = np.random.default_rng(seed)
    trace = [ren_diagnostic_loss(party_a, party_b, ids_a)]
    batch_no = 0
    for _ in range(epochs):
        for idx in nn.iterate_minibatches(len(ids_a), batch_size, rng):
            run_batch_update(party_a, party_b, ids_a[idx], lr, channel, batch_no)
            batch_no += 1
        trace.append(ren_diagnostic_loss(party_a, party_b, ids_a))
        if not np.isfinite(trace[-1]):
            raise TrainingError("estimation network diverged", {"loss_trace": trace})
    return party_a.ren, trace


def ren_diagnostic_loss(party_a, party_b, ids) -> float:
    """Loss on ``ids`` computed with omniscient access (simulator bookkeeping only)."""
    return ren_loss(party_b.rep_of(ids), estimate(party_a.ren, party_a.rep_of(ids)))


@dataclass(frozen=True)
class Claim1Report:
    equations: int
    unknowns: int
    rank: int | None
    nullspace_dim: int | None
    nullspace_dim_lower_bound: int
    underdetermined: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def claim1_nullspace_dim(jacobians, m: int, d_b: int, param_count: int) -> Claim1Report:
    """Rank analysis of the linear system A would solve for B's gradients.

    Unknowns are the m*d_B per-coordinate loss gradients; each of the K
    parameter-gradient entries A receives is one equation whose coefficients
    are (1/m) * J_i[j, k].  With ``jacobians=None`` only the structural bound
    ``max(0, m*d_B - K)`` is reported (no matrix is built).
    """
    unknowns = m * d_b
    bound = max(0, unknowns - param_count)
    if jacobians is None:
        return Claim1Report(param_count, unknowns, None, None, bound, param_count < unknowns)
    jac = np.asarray(jacobians, dtype=float)
    if jac.shape != (m, d_b, param_count):
        raise ShapeError(f"jacobians shape {jac.shape} != {(m, d_b, param_count)}")
    coeff = jac.reshape(unknowns, param_count).T / m
    sv = np.linalg.svd(coeff, compute_uv=False) if coeff.size else np.zeros(0)
    top = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > 1e-10 * top)) if top > 0 else 0
    null = unknowns - rank
    assert null >= bound, "rank cannot exceed the number of equations"
    return Claim1Report(param_count, unknowns, rank, null, bound, param_count < unknowns)
