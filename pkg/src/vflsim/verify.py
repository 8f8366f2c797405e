"""Self-checks behind ``vflsim verify``: gradients, HE arithmetic, the encrypted
update and the underdetermination bound."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .classification import DistillConfig, build_classifier, objective_and_grad, one_hot
from .correction import Perturber
from .estimation import REN_HIDDEN, RenModel, claim1_nullspace_dim, grad_wrt_estimate, run_batch_update
from .federation import PartyA, PartyB
from .paillier import Paillier, add, decode_fixed, decrypt, encode_fixed, encrypt, keygen, scalar_mul
from .protocol import Channel

GRAD_TOL = 1e-4
DOT_TOL = 1e-6
PROTOCOL_TOL = 1e-6


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        brief = ", ".join(f"{k}={v}" for k, v in self.details.items() if not isinstance(v, (list, dict)))
        return f"[{status}] {self.name} ({self.seconds:.1f}s) {brief}"


def _timed(fn):
    def inner(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res

    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


# -- gradients -----------------------------------------------------------------


def _random_loss(rng, out_dim):
    kind = rng.integers(3)
    if kind == 0:
        target = rng.normal(size=out_dim)
        return "mse", (lambda o: 0.5 * float(np.sum((o - target) ** 2))), (lambda o: o - target)
    if kind == 1:
        coef = rng.normal(size=out_dim)
        return "cubic", (lambda o: float(np.sum(coef * o**3))), (lambda o: 3 * coef * o**2)
    labels = rng.integers(out_dim, size=None)

    def ce(o):
        z = o - o.max(axis=1, keepdims=True)
        return float(-np.sum(z[:, labels] - np.log(np.exp(z).sum(axis=1))))

    def ce_grad(o):
        z = np.exp(o - o.max(axis=1, keepdims=True))
        p = z / z.sum(axis=1, keepdims=True)
        p[:, labels] -= 1.0
        return p

    return "softmax-ce", ce, ce_grad


def random_gradcheck(n_trials: int = 100, seed: int = 0) -> list[float]:
    """Max relative error for each of ``n_trials`` random nets and losses."""
    rng = np.random.default_rng(seed)
    errs = []
    while len(errs) < n_trials:
        depth = int(rng.integers(1, 4))
        sizes = [int(s) for s in rng.integers(1, 7, size=depth + 1)]
        specs = [nn.LayerSpec(a, b, str(rng.choice(nn.ACTIVATIONS))) for a, b in zip(sizes, sizes[1:])]
        net = nn.Mlp.from_specs(specs, rng)
        for layer in net.layers:
            layer.bias[...] = rng.normal(scale=0.5, size=layer.bias.shape)
        x = rng.normal(size=(int(rng.integers(1, 5)), sizes[0]))
        if nn.near_kink(net, x):
            continue
        _, loss, grad = _random_loss(rng, sizes[-1])
        errs.append(nn.finite_diff_check(net, x, loss, grad))
    return errs


# entries below this fraction of the largest gradient are compared absolutely
DEFAULT_NET_REL_FLOOR = 1e-5


def default_net_gradchecks(seed: int = 0) -> dict[str, float]:
    """Finite-difference checks on the full-size networks of the pipeline."""
    rng = np.random.default_rng(seed)
    out = {}
    ren = RenModel.build(200, 200, rng).net
    target = rng.normal(size=(2, 200))
    x = rng.normal(size=(2, 200))
    out["ren"] = nn.finite_diff_check(
        ren, x, lambda o: float(np.sum((o - target) ** 2) / 2), lambda o: grad_wrt_estimate(target, o),
        rel_floor=DEFAULT_NET_REL_FLOOR,
    )
    pert = Perturber.build(200, 0.6, rng).net
    pert.layers[-1].weight[...] = rng.normal(scale=0.1, size=pert.layers[-1].weight.shape)
    out["perturber"] = nn.finite_diff_check(
        pert, x, lambda o: float(np.sum((o - target) ** 2) / 2), lambda o: grad_wrt_estimate(target, o),
        rel_floor=DEFAULT_NET_REL_FLOOR,
    )
    clf = build_classifier(400, 2, rng)
    xc = rng.normal(size=(3, 400))
    y = one_hot(rng.integers(2, size=3), 2)
    teacher = rng.normal(size=(3, 2))
    cfg = DistillConfig()
    w = np.array([1.5, 0.75])
    out["classifier"] = nn.finite_diff_check(
        clf,
        xc,
        lambda o: objective_and_grad(o, y, teacher, cfg, w)[0],
        lambda o: objective_and_grad(o, y, teacher, cfg, w)[1],
        rel_floor=DEFAULT_NET_REL_FLOOR,
    )
    return out


@_timed
def gradcheck_suite(n_trials: int = 100, seed: int = 0, include_default: bool = True) -> SuiteResult:
    errs = random_gradcheck(n_trials, seed)
    details = {"trials": n_trials, "max_rel_err": float(max(errs))}
    worst = max(errs)
    if include_default:
        dn = default_net_gradchecks(seed)
        details.update({f"{k}_rel_err": v for k, v in dn.items()})
        worst = max(worst, *dn.values())
    return SuiteResult("gradcheck", worst <= GRAD_TOL, details)


# -- homomorphic arithmetic ---------------------------------------------------------


@_timed
def he_suite(trials: int = 10_000, modulus_bits: int = 512, dot_trials: int = 20, seed: int = 0) -> SuiteResult:
    """Exact add / scalar-mul round trips and fixed-point dot products."""
    keys = keygen(modulus_bits, seed)
    pk, sk = keys.public, keys.private
    n = pk.n
    rng = random.Random(seed)
    bound = n // 4
    failures = 0
    for _ in range(trials):
        a, b = rng.randrange(-bound, bound), rng.randrange(-bound, bound)
        k = rng.randrange(-(1 << 64), 1 << 64)
        ca, cb = encrypt(pk, a % n, rng), encrypt(pk, b % n, rng)
        if decrypt(sk, add(pk, ca, cb)) != (a + b) % n:
            failures += 1
        if decrypt(sk, scalar_mul(pk, k, ca)) != (k * a) % n:
            failures += 1
    nrng = np.random.default_rng(seed)
    fb = 32
    worst = 0.0
    for _ in range(dot_trials):
        w, u = nrng.normal(size=100), nrng.normal(size=100)
        acc = encrypt(pk, 0, rng)
        for wi, ui in zip(w, u):
            acc = add(pk, acc, scalar_mul(pk, encode_fixed(wi, fb), encrypt(pk, encode_fixed(ui, fb, n), rng)))
        got = decode_fixed(decrypt(sk, acc), 2 * fb, n)
        worst = max(worst, abs(got - float(w @ u)))
    ok = failures == 0 and worst <= DOT_TOL
    return SuiteResult(
        "he",
        ok,
        {"modulus_bits": modulus_bits, "trials": trials, "exact_failures": failures, "dot_max_abs_err": worst},
    )


# -- encrypted update vs plaintext chain rule ------------------------------------------


def protocol_equivalence(
    batches: int = 20, m: int = 4, d: int = 8, hidden=(10, 10), modulus_bits: int = 512, seed: int = 0, lr: float = 0.05
) -> dict:
    """Run the four-message update with real HE next to a plaintext twin.

    Returns the largest per-parameter difference seen after any batch.
    """
    rng = np.random.default_rng(seed)
    he = Paillier(modulus_bits, seed=seed)
    n_rows = m * 5
    x_a, x_b = rng.normal(size=(n_rows, d)), rng.normal(size=(n_rows, d))
    ids = np.arange(n_rows)
    party_a = PartyA(x_a, np.zeros(n_rows, dtype=int), he.public_key, he.frac_bits)
    party_b = PartyB(he)
    party_b.receive_rows(ids, x_b)
    party_a.train_encoder(ids, 10, d, 0, m, lr, seed)
    party_b.train_encoder(10, d, 0, m, lr, seed)
    party_a.set_overlap(ids)
    party_a.ren = RenModel.build(d, d, rng, hidden)
    twin = party_a.ren.net.copy()
    channel = Channel()
    worst = 0.0
    for b in range(batches):
        batch = rng.choice(ids, size=m, replace=False)
        r_a, r_b = party_a.rep_of(batch), party_b.rep_of(batch)
        out, cache = nn.forward(twin, r_a)
        grads, _ = nn.backward(twin, cache, grad_wrt_estimate(r_b, out))
        nn.sgd_step(twin, grads, lr)
        run_batch_update(party_a, party_b, batch, lr, channel, b)
        worst = max(worst, float(np.max(np.abs(party_a.ren.net.get_flat() - twin.get_flat()))))
    return {"batches": batches, "m": m, "param_count": twin.param_count, "max_param_diff": worst, "messages": len(channel)}


@_timed
def protocol_suite(batches: int = 20, modulus_bits: int = 512, seed: int = 0) -> SuiteResult:
    res = protocol_equivalence(batches=batches, modulus_bits=modulus_bits, seed=seed)
    return SuiteResult("protocol", res["max_param_diff"] <= PROTOCOL_TOL, res)


# -- underdetermination ----------------------------------------------------------------


# (m, d_B, hidden widths), each with K < m * d_B
CLAIM1_CASES = [(8, 8, (3,)), (6, 5, (2,)), (12, 6, (3,)), (16, 4, (2, 2)), (10, 10, (4,))]


def claim1_cases(cases=CLAIM1_CASES, seed: int = 0) -> list[dict]:
    """Numerical nullspace dimensions for small nets with ``K < m * d_B``."""
    rng = np.random.default_rng(seed)
    out = []
    for m, d_b, hidden in cases:
        d_a = d_b
        ren = RenModel.build(d_a, d_b, rng, hidden)
        jac = nn.batch_jacobians(ren.net, rng.normal(size=(m, d_a)))
        rep = claim1_nullspace_dim(jac, m, d_b, ren.param_count)
        out.append({"m": m, "d_b": d_b, "K": ren.param_count, **rep.as_dict()})
    return out


def claim1_default(m: int = 128, d_b: int = 200, d_a: int = 200) -> dict:
    ren = RenModel.build(d_a, d_b, np.random.default_rng(0), REN_HIDDEN)
    rep = claim1_nullspace_dim(None, m, d_b, ren.param_count)
    return {"m": m, "d_b": d_b, "K": ren.param_count, "m_times_d_b": m * d_b, **rep.as_dict()}


@_timed
def claim1_suite(seed: int = 0) -> SuiteResult:
    cases = claim1_cases(seed=seed)
    ok = all(c["K"] < c["unknowns"] and c["nullspace_dim"] >= c["nullspace_dim_lower_bound"] >= 1 for c in cases)
    default = claim1_default()
    return SuiteResult(
        "claim1",
        ok,
        {
            "cases": cases,
            "default_K": default["K"],
            "default_m_dB": default["m_times_d_b"],
            "default_underdetermined": default["underdetermined"],
            "default_bound": default["nullspace_dim_lower_bound"],
        },
    )


SUITES = {"gradcheck": gradcheck_suite, "he": he_suite, "protocol": protocol_suite, "claim1": claim1_suite}
