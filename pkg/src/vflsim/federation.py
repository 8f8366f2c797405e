"""Two-party federation: data partitioning, arrival timeline, party actors
and the end-to-end pipeline with its classifier-update strategies.

Party A (active) holds every example's A-side features and all labels.
Party B (passive) receives its feature rows over time according to a
:class:`Timeline`.  The parties only interact through a
:class:`~vflsim.protocol.Channel`.
"""

from __future__ import annotations

import math
from fractions import Fraction
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .classification import (
    ClassifierSnapshot,
    DistillConfig,
    build_classifier,
    concat_reps,
    inverse_frequency_weights,
    train_classifier_t,
)
from .correction import Perturber, perturb, train_perturber
from .data import Dataset, EvalReport, Standardizer, macro_prf, stratified_holdout, stratified_stream_sample
from .encoding import AutoEncoder, encode, train_autoencoder
from .errors import InfeasibleTimelineError, KeyMismatchError, ProtocolError, SplitError, StageError, VflError
from .estimation import (
    MAX_REAL_HE_JACOBIAN,
    RenModel,
    encrypted_vjp,
    estimate,
    grad_wrt_estimate,
    mock_vjp,
    train_ren,
)
from .paillier import EncryptedArray, MockPaillier, Paillier, make_backend
from .protocol import ALLOWED_TYPES, Channel, MsgType

STRATEGIES = ("dvfl", "retrain", "finetune", "joint")
MODES = ("random", "asc_vs_des", "parallel", "uniform")


def stage_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for one pipeline stage, derived from the root seed."""
    spawn = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn))


def stage_seed(seed: int, *keys) -> int:
    return int(stage_rng(seed, *keys).integers(2**31 - 1))


# -- vertical partition -------------------------------------------------------


@dataclass(frozen=True)
class VerticalSplit:
    a_columns: np.ndarray
    b_columns: np.ndarray

    @property
    def permutation(self) -> np.ndarray:
        """Original column index of each column of ``[x_A | x_B]``."""
        return np.concatenate([self.a_columns, self.b_columns])

    def reassemble(self, x_a, x_b) -> np.ndarray:
        joined = np.hstack([x_a, x_b])
        out = np.empty_like(joined)
        out[:, self.permutation] = joined
        return out


def vertical_split(dataset: Dataset, split_fraction: float = 0.5):
    """A gets the first ceil(fraction * F) columns, B the rest.

    Returns ``(x_a, labels, x_b, split)``; rows stay aligned by index.
    """
    n_feat = dataset.n_features
    if n_feat < 2:
        raise SplitError("a vertical split needs at least two features")
    if not 0.0 < split_fraction < 1.0:
        raise SplitError(f"split_fraction must lie strictly between 0 and 1, got {split_fraction}")
    n_a = math.ceil(split_fraction * n_feat)
    if n_a >= n_feat:
        raise SplitError(f"split_fraction {split_fraction} leaves party B no columns")
    cols = np.arange(n_feat)
    split = VerticalSplit(cols[:n_a], cols[n_a:])
    return dataset.features[:, split.a_columns], dataset.labels.copy(), dataset.features[:, split.b_columns], split


# -- timeline -----------------------------------------------------------------

# Per-class share of each class's pool arriving at t = 0..5 (positives, negatives).
TABLE_SCHEDULES = {
    "random": ([5, 7, 6, 1, 4, 7], [5, 3, 4, 9, 6, 3], 30),
    "asc_vs_des": ([200, 288, 224, 160, 96, 32], [200, 32, 96, 160, 224, 288], 1000),
    "parallel": ([50, 10, 10, 10, 10, 10], [20, 16, 16, 16, 16, 16], 100),
    "uniform": ([25, 15, 15, 15, 15, 15], [25, 15, 15, 15, 15, 15], 100),
}


def class_shares(mode: str, T: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Fractions of the positive and negative pools arriving at each timestamp."""
    if mode not in MODES:
        raise ValueError(f"unknown arrival mode {mode!r}; choose from {MODES}")
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return np.ones(1), np.ones(1)
    if T == 5:
        pos, neg, denom = TABLE_SCHEDULES[mode]
        return np.asarray(pos, float) / denom, np.asarray(neg, float) / denom
    rest = np.ones(T) / T
    if mode == "uniform":
        return np.r_[0.25, 0.75 * rest], np.r_[0.25, 0.75 * rest]
    if mode == "parallel":
        return np.r_[0.5, 0.5 * rest], np.r_[0.2, 0.8 * rest]
    if mode == "asc_vs_des":
        ramp = np.arange(T, 0, -1, dtype=float)
        return np.r_[0.2, 0.8 * ramp / ramp.sum()], np.r_[0.2, 0.8 * ramp[::-1] / ramp.sum()]
    rng = stage_rng(seed, "random-shares")
    p0 = 1.0 / (T + 1)
    return np.r_[p0, (1 - p0) * rng.dirichlet(np.ones(T))], np.r_[p0, (1 - p0) * rng.dirichlet(np.ones(T))]


def _counts(shares: np.ndarray, total: int) -> list[int]:
    counts = [int(round(s * total)) for s in shares[:-1]]
    last = total - sum(counts)
    if last < 0:
        raise InfeasibleTimelineError("rounded arrival sizes exceed the class pool")
    return counts + [last]


@dataclass
class Timeline:
    mode: str
    T: int
    pos_shares: np.ndarray
    neg_shares: np.ndarray
    arrivals: list[np.ndarray]

    def arrival(self, t: int) -> np.ndarray:
        return self.arrivals[t]

    def overlap(self, t: int) -> np.ndarray:
        """IDs held by both parties at timestamp ``t``."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestamp {t} outside [0, {self.T}]")
        return np.sort(np.concatenate(self.arrivals[: t + 1]))

    def delta_overlap(self, t: int) -> np.ndarray:
        prev = self.overlap(t - 1) if t > 0 else np.zeros(0, dtype=int)
        return np.setdiff1d(self.overlap(t), prev)

    def class_ratio(self, t: int) -> str:
        pos = self.pos_shares[t] * 100
        neg = self.neg_shares[t] * 100
        if neg == 0:
            return f"{pos:.1f}% : 0.0% (1:0)"
        r = Fraction(pos / neg).limit_denominator(10)
        return f"{pos:.1f}% : {neg:.1f}% ({r.numerator}:{r.denominator})"


def build_timeline(mode: str, T: int, pool_ids, pool_labels, seed: int = 0) -> Timeline:
    """Schedule the pool into T+1 disjoint arrivals.

    Shares are fractions of each class's own pool; arrival sizes round to the
    nearest integer with the remainder landing on the final timestamp.
    Modes other than ``uniform`` need binary labels.
    """
    pool_ids = np.asarray(pool_ids, dtype=int)
    pool_labels = np.asarray(pool_labels, dtype=int)
    classes = np.unique(pool_labels)
    if T > 0 and len(classes) < 2:
        raise InfeasibleTimelineError("the pool needs at least two classes")
    pos_s, neg_s = class_shares(mode, T, seed)
    rng = stage_rng(seed, "timeline", mode, T)
    if T == 0:
        return Timeline(mode, 0, pos_s, neg_s, [np.sort(pool_ids)])

    if mode == "uniform" or len(classes) > 2:
        if mode != "uniform":
            raise InfeasibleTimelineError(f"mode {mode!r} is defined for binary labels only")
        per_class = {c: _counts(pos_s, int(np.sum(pool_labels == c))) for c in classes}
        remaining = {c: rng.permutation(pool_ids[pool_labels == c]) for c in classes}
        arrivals = []
        for t in range(T + 1):
            chunk = []
            for c in classes:
                k = per_class[c][t]
                chunk.append(remaining[c][:k])
                remaining[c] = remaining[c][k:]
            arrivals.append(np.sort(np.concatenate(chunk)).astype(int))
        return Timeline(mode, T, pos_s, neg_s, arrivals)

    if set(classes.tolist()) - {0, 1}:
        raise InfeasibleTimelineError("binary modes expect labels 0 (negative) and 1 (positive)")
    pos_counts = _counts(pos_s, int(np.sum(pool_labels == 1)))
    neg_counts = _counts(neg_s, int(np.sum(pool_labels == 0)))
    label_arr = np.zeros(pool_ids.max() + 1, dtype=int)
    label_arr[pool_ids] = pool_labels
    available = pool_ids.copy()
    arrivals = []
    for t in range(T + 1):
        chosen = stratified_stream_sample(label_arr, available, pos_counts[t], neg_counts[t], rng)
        arrivals.append(chosen)
        available = np.setdiff1d(available, chosen)
    return Timeline(mode, T, pos_s, neg_s, arrivals)


# -- parties ------------------------------------------------------------------


class PartyA:
    """Active party: A-side features for every example, all labels, the
    estimation network and the classifiers.  Holds only B's public key."""

    role = "A"

    def __init__(self, features: np.ndarray, labels: np.ndarray, public_key, frac_bits: int):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=int)
        self.public_key = public_key
        self.frac_bits = frac_bits
        self.ae: AutoEncoder | None = None
        self.ren: RenModel | None = None
        self.snapshots: dict[str, list[ClassifierSnapshot]] = {}
        self._overlap = np.zeros(0, dtype=int)
        self._reps: np.ndarray | None = None
        self._pending = None

    def train_encoder(self, train_ids, hidden, rep_dim, epochs, batch_size, lr, seed):
        rng = stage_rng(seed, "A", "ae-init")
        self.ae = AutoEncoder.build(self.features.shape[1], hidden, rep_dim, rng)
        train_autoencoder(self.ae, self.features[train_ids], epochs, batch_size, lr, stage_rng(seed, "A", "ae-train"))
        self.use_encoder(self.ae)

    def use_encoder(self, ae: AutoEncoder) -> None:
        """Adopt a trained encoder and cache the codes of every local row."""
        self.ae = ae
        self._reps = encode(ae, self.features)

    def rep_of(self, ids) -> np.ndarray:
        return self._reps[np.asarray(ids, dtype=int)]

    def set_overlap(self, ids) -> None:
        self._overlap = np.sort(np.asarray(ids, dtype=int))

    def overlap_ids(self) -> np.ndarray:
        return self._overlap

    # protocol steps 1, 3 and the update after 4
    def estimate_batch(self, ids) -> np.ndarray:
        r_a = self.rep_of(ids)
        out, cache = nn.forward(self.ren.net, r_a)
        self._pending = (r_a, cache)
        return out

    def encrypted_param_grad(self, enc_u: EncryptedArray) -> EncryptedArray:
        if self._pending is None:
            raise ProtocolError("encrypted gradient arrived before any estimates were sent")
        r_a, cache = self._pending
        if enc_u.key_id != self.public_key.key_id:
            raise KeyMismatchError("gradient encrypted under an unexpected key")
        if enc_u.mock:
            return mock_vjp(self.ren.net, cache, enc_u)
        m, d_b = enc_u.shape
        if m * d_b * self.ren.param_count > MAX_REAL_HE_JACOBIAN:
            raise VflError(
                f"real-HE batch needs {m * d_b * self.ren.param_count} Jacobian entries; use mock HE at this scale"
            )
        jac = nn.batch_jacobians(self.ren.net, r_a)
        return encrypted_vjp(jac, enc_u, self.public_key)

    def apply_ren_grad(self, flat_grad, lr: float) -> None:
        self._pending = None
        nn.sgd_step(self.ren.net, nn.unflatten_grads(self.ren.net, flat_grad), lr)


class PartyB:
    """Passive party: its own feature rows as they arrive, its autoencoder,
    the perturber and the HE key pair."""

    role = "B"

    def __init__(self, he):
        self.he = he
        self.ae: AutoEncoder | None = None
        self.perturber: Perturber | None = None
        self.scaler: Standardizer | None = None
        self._raw: dict[int, np.ndarray] = {}
        self._ids = np.zeros(0, dtype=int)
        self._reps = None

    def receive_rows(self, ids, rows) -> None:
        """New local rows appear (the arrival of a timestamp)."""
        for i, row in zip(np.asarray(ids, dtype=int), np.asarray(rows, dtype=float)):
            self._raw[int(i)] = row
        self._ids = np.array(sorted(self._raw), dtype=int)
        self._reps = None

    def held_ids(self) -> np.ndarray:
        return self._ids

    def raw_matrix(self, ids=None) -> np.ndarray:
        ids = self._ids if ids is None else ids
        return np.stack([self._raw[int(i)] for i in ids]) if len(ids) else np.zeros((0, 0))

    def train_encoder(self, hidden, rep_dim, epochs, batch_size, lr, seed):
        x = self.raw_matrix()
        self.scaler = Standardizer().fit(x)
        rng = stage_rng(seed, "B", "ae-init")
        ae = AutoEncoder.build(x.shape[1], hidden, rep_dim, rng)
        train_autoencoder(ae, self.scaler.transform(x), epochs, batch_size, lr, stage_rng(seed, "B", "ae-train"))
        self.use_encoder(ae, self.scaler)

    def use_encoder(self, ae: AutoEncoder, scaler: Standardizer) -> None:
        self.ae, self.scaler = ae, scaler
        self._reps = None

    def rep_of(self, ids) -> np.ndarray:
        if self._reps is None:
            self._reps = dict(zip(self._ids.tolist(), encode(self.ae, self.scaler.transform(self.raw_matrix()))))
        return np.stack([self._reps[int(i)] for i in ids])

    # protocol steps 2 and 4
    def encrypted_loss_grad(self, ids, estimates) -> EncryptedArray:
        return self.he.encrypt_array(grad_wrt_estimate(self.rep_of(ids), estimates))

    def decrypt_param_grad(self, enc: EncryptedArray) -> np.ndarray:
        return self.he.decrypt_array(enc)

    def train_perturber(self, ids, estimates, delta, epochs, batch_size, lr, seed):
        self.perturber = Perturber.build(estimates.shape[1], delta, stage_rng(seed, "B", "perturber-init"))
        train_perturber(self.perturber, self.rep_of(ids), estimates, epochs, batch_size, lr, stage_rng(seed, "B", "perturber-train"))

    def perturbation(self, estimates) -> np.ndarray:
        return perturb(self.perturber, estimates)[0]


# -- privacy checks -------------------------------------------------------------


def _walk(obj, seen=None, depth=0):
    seen = set() if seen is None else seen
    if id(obj) in seen or depth > 4:
        return
    seen.add(id(obj))
    yield obj
    if isinstance(obj, dict):
        for v in obj.values():
            yield from _walk(v, seen, depth + 1)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from _walk(v, seen, depth + 1)
    elif hasattr(obj, "__dict__") and not isinstance(obj, (np.ndarray, type)):
        for v in vars(obj).values():
            yield from _walk(v, seen, depth + 1)


def payload_leaks_rows(payload_arrays, raw: np.ndarray) -> bool:
    """True when some payload row contains a raw feature row as a contiguous run."""
    if raw.size == 0:
        return False
    width = raw.shape[1]
    firsts = raw[:, 0]
    for arr in payload_arrays:
        if arr.dtype.kind != "f" or arr.ndim != 2 or arr.shape[1] < width:
            continue
        hits = np.argwhere(np.isin(arr, firsts))
        for r, c in hits:
            if c + width > arr.shape[1]:
                continue
            window = arr[r, c : c + width]
            if np.any(np.all(raw == window, axis=1)):
                return True
    return False


def assert_privacy(party_a: PartyA, party_b: PartyB, channel: Channel, raw_a: np.ndarray, raw_b: np.ndarray) -> dict:
    """Structural privacy checks; raises ProtocolError on any violation."""
    for obj in _walk(party_a):
        if isinstance(obj, (Paillier, MockPaillier)) or type(obj).__name__ == "PrivateKey":
            raise ProtocolError("party A holds a decryption key")
    for obj in _walk(party_b):
        if isinstance(obj, RenModel):
            raise ProtocolError("party B holds the estimation network")
    if any(np.shares_memory(party_a.features, v) for v in party_b._raw.values()):
        raise ProtocolError("party A and party B share raw feature memory")
    types = {m.variant for m in channel.log}
    if not types <= ALLOWED_TYPES:
        raise ProtocolError(f"disallowed message types {types - ALLOWED_TYPES}")
    for m in channel.log:
        arrays = m.arrays()
        if payload_leaks_rows(arrays, raw_a) or payload_leaks_rows(arrays, raw_b):
            raise ProtocolError(f"message {m.seq} ({m.variant.value}) carries a raw feature row")
    return {"messages": len(channel.log), "types": sorted(t.value for t in types)}


# -- orchestration --------------------------------------------------------------


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except VflError as exc:
                raise StageError(name, exc) from exc

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


class Federation:
    """One simulated deployment: a fixed pool/test split, a timeline and two parties.

    ``setup()`` runs the representation pipeline (local autoencoders, the
    estimation network over the encrypted protocol, the perturber), all
    trained on the t=0 overlap.  ``run()`` then walks the timeline and updates
    one classifier per strategy.
    """

    def __init__(self, cfg, dataset: Dataset, pool_ids, test_ids, seed: int, fold: int | None = None):
        self.cfg = cfg
        self.dataset = dataset
        self.pool_ids = np.sort(np.asarray(pool_ids, dtype=int))
        self.test_ids = np.sort(np.asarray(test_ids, dtype=int))
        self.seed = seed
        self.fold = fold
        self.channel = Channel()
        self.n_classes = dataset.n_classes
        self.ren_trace: list[float] = []
        self.timings: dict[str, float] = {}
        self._corrected_cache: dict[int, np.ndarray] = {}

    # setup ------------------------------------------------------------------
    def setup(self) -> "Federation":
        cfg = self.cfg
        t0 = time.perf_counter()
        self._partition()
        self.timeline = self._build_timeline()
        self.party_b.receive_rows(self.timeline.arrival(0), self.x_b[self.timeline.arrival(0)])
        self.party_a.set_overlap(self.timeline.overlap(0))
        self._train_encoders()
        self.timings["encoders"] = time.perf_counter() - t0
        t1 = time.perf_counter()
        self._train_estimator(0)
        self.timings["estimator"] = time.perf_counter() - t1
        w = cfg.class_weights
        if w == "auto":
            self.class_weights = inverse_frequency_weights(self.party_a.labels[self.pool_ids], self.n_classes)
        elif w == "none":
            self.class_weights = np.ones(self.n_classes)
        else:
            self.class_weights = np.asarray(w, dtype=float)
        return self

    @_stage("partition")
    def _partition(self):
        cfg = self.cfg
        x_a, labels, x_b, self.split = vertical_split(self.dataset, cfg.split_fraction)
        self.scaler_a = Standardizer().fit(x_a[self.pool_ids])
        self.x_a, self.x_b = x_a, x_b
        he = make_backend(cfg.he_mode, cfg.modulus_bits, cfg.frac_bits, seed=stage_seed(self.seed, "he"))
        self.party_a = PartyA(self.scaler_a.transform(x_a), labels, he.public_key, cfg.frac_bits)
        self.party_b = PartyB(he)

    @_stage("timeline")
    def _build_timeline(self):
        labels = self.dataset.labels[self.pool_ids]
        return build_timeline(self.cfg.mode, self.cfg.T, self.pool_ids, labels, self.seed)

    @_stage("encoding")
    def _train_encoders(self):
        cfg = self.cfg
        lr = cfg.stage_lr("ae")
        self.party_a.train_encoder(self.pool_ids, cfg.ae_hidden, cfg.rep_dim, cfg.ae_epochs, cfg.batch_size, lr, self.seed)
        self.party_b.train_encoder(cfg.ae_hidden, cfg.rep_dim, cfg.ae_epochs, cfg.batch_size, lr, self.seed)

    @_stage("estimation")
    def _train_estimator(self, t: int):
        cfg = self.cfg
        if self.party_a.ren is None:
            self.party_a.ren = RenModel.build(cfg.rep_dim, cfg.rep_dim, stage_rng(self.seed, "ren-init"))
        _, trace = train_ren(
            self.party_a, self.party_b, cfg.ren_epochs, cfg.batch_size, cfg.stage_lr("ren"), self.channel,
            stage_rng(self.seed, "ren-batches", t),
        )
        self.ren_trace.extend(trace)
        self._train_corrector(t)
        self._corrected_cache.clear()

    @_stage("correction")
    def _train_corrector(self, t: int):
        cfg = self.cfg
        ids = self.party_a.overlap_ids()
        est = estimate_rows(self.party_a, ids)
        self.channel.send(MsgType.ESTIMATED_REPS, {"ids": ids, "reps": est}, "A", "B")
        msg = self.channel.receive("B", MsgType.ESTIMATED_REPS)
        self.party_b.train_perturber(
            msg.payload["ids"], msg.payload["reps"], cfg.delta, cfg.perturber_epochs, cfg.batch_size,
            cfg.stage_lr("perturber"), stage_seed(self.seed, "perturber", t),
        )

    # inference through the channel -------------------------------------------
    def corrected_reps(self, ids) -> np.ndarray:
        """``[r_A | r_B_hat]`` for ``ids``: A estimates, B returns the perturbation."""
        ids = np.asarray(ids, dtype=int)
        est = estimate_rows(self.party_a, ids)
        self.channel.send(MsgType.ESTIMATED_REPS, {"ids": ids, "reps": est}, "A", "B")
        msg = self.channel.receive("B", MsgType.ESTIMATED_REPS)
        eps = self.party_b.perturbation(msg.payload["reps"])
        self.channel.send(MsgType.PERTURBATION, {"ids": msg.payload["ids"], "eps": eps}, "B", "A")
        reply = self.channel.receive("A", MsgType.PERTURBATION)
        return concat_reps(self.party_a.rep_of(ids), est + reply.payload["eps"])

    def advance(self, t: int) -> None:
        """Deliver the arrival of timestamp ``t`` to party B."""
        new = self.timeline.arrival(t)
        self.party_b.receive_rows(new, self.x_b[new])
        self.party_a.set_overlap(self.timeline.overlap(t))
        if self.cfg.retrain_estimator:
            self._train_estimator(t)

    # classifier updates --------------------------------------------------------
    def _distill_cfg(self):
        return DistillConfig(self.cfg.temperature, self.cfg.lam, tuple(self.class_weights))

    def _fresh_net(self, t: int, in_dim: int):
        return build_classifier(in_dim, self.n_classes, stage_rng(self.seed, "clf-init", t))

    def _evaluate(self, snap: ClassifierSnapshot, test_x, strategy: str, t: int, extra: dict) -> EvalReport:
        rep = macro_prf(snap.predict(test_x), self.dataset.labels[self.test_ids], self.n_classes, t, strategy)
        rep.extra.update(
            {
                "dataset": self.dataset.name,
                "seed": self.seed,
                "fold": self.fold,
                "mode": self.cfg.mode,
                "class_ratio": self.timeline.class_ratio(t),
                **extra,
            }
        )
        return rep

    def run(self, strategies=STRATEGIES) -> list[EvalReport]:
        cfg = self.cfg
        for s in strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        dcfg = self._distill_cfg()
        lr = cfg.stage_lr("clf")
        test_x = self.corrected_reps(self.test_ids)
        reports: list[EvalReport] = []
        prev: dict[str, ClassifierSnapshot] = {}
        seen_x, seen_y = [], []
        for t in range(self.timeline.T + 1):
            if t > 0:
                self.advance(t)
                if cfg.retrain_estimator:
                    test_x = self.corrected_reps(self.test_ids)
            new = self.timeline.arrival(t)
            x_new = self.corrected_reps(new)
            y_new = self.party_a.labels[new]
            seen_x.append(x_new)
            seen_y.append(y_new)
            seed_t = stage_seed(self.seed, "clf-train", t)
            for s in strategies:
                start = time.perf_counter()
                snap = self._update(s, t, prev.get(s), x_new, y_new, seen_x, seen_y, dcfg, lr, seed_t)
                elapsed = time.perf_counter() - start
                prev[s] = snap
                self.party_a.snapshots.setdefault(s, []).append(snap)
                reports.append(self._evaluate(snap, test_x, s, t, {"n_new": int(len(new)), "update_seconds": elapsed}))
        private_a = np.vstack([self.x_a, self.party_a.features])
        private_b = np.vstack([self.x_b, self.party_b.scaler.transform(self.x_b)])
        self.privacy = assert_privacy(self.party_a, self.party_b, self.channel, private_a, private_b)
        return reports

    @_stage("classification")
    def _update(self, strategy, t, prev, x_new, y_new, seen_x, seen_y, dcfg, lr, seed_t):
        cfg = self.cfg
        epochs = cfg.clf_epochs
        bs = cfg.batch_size
        if t == 0:
            if "t0" not in self._corrected_cache:
                init = self._fresh_net(0, x_new.shape[1])
                self._corrected_cache["t0"] = train_classifier_t(
                    None, x_new, y_new, dcfg, epochs, lr, seed_t, bs, init=init, timestamp=0
                )
            return self._corrected_cache["t0"]
        if strategy == "dvfl":
            return train_classifier_t(prev, x_new, y_new, dcfg, epochs, lr, seed_t, bs, timestamp=t)
        if strategy == "finetune":
            return train_classifier_t(
                None, x_new, y_new, dcfg, epochs, lr * cfg.finetune_lr_factor, seed_t, bs, init=prev.net, timestamp=t
            )
        init = self._fresh_net(t, x_new.shape[1])
        if strategy == "retrain":
            return train_classifier_t(None, x_new, y_new, dcfg, epochs, lr, seed_t, bs, init=init, timestamp=t)
        x_all, y_all = np.vstack(seen_x), np.concatenate(seen_y)
        return train_classifier_t(None, x_all, y_all, dcfg, epochs, lr, seed_t, bs, init=init, timestamp=t)

    # non-federated references (static scenario) ------------------------------------
    def nonfed_reports(self) -> list[EvalReport]:
        """Classifiers on A's codes alone, and on plaintext ``[r_A | r_B]``."""
        cfg = self.cfg
        dcfg = self._distill_cfg()
        lr = cfg.stage_lr("clf")
        seed_t = stage_seed(self.seed, "clf-train", 0)
        ids = self.timeline.overlap(0)
        y = self.party_a.labels[ids]
        r_a_train, r_a_test = self.party_a.rep_of(ids), self.party_a.rep_of(self.test_ids)
        b = self.party_b
        r_b_train = b.rep_of(ids)
        r_b_test = encode(b.ae, b.scaler.transform(self.x_b[self.test_ids]))
        out = []
        for name, xtr, xte in (
            ("nonfed_without_b", r_a_train, r_a_test),
            ("nonfed_with_b", concat_reps(r_a_train, r_b_train), concat_reps(r_a_test, r_b_test)),
        ):
            init = self._fresh_net(0, xtr.shape[1])
            snap = train_classifier_t(None, xtr, y, dcfg, cfg.clf_epochs, lr, seed_t, cfg.batch_size, init=init)
            out.append(self._evaluate(snap, xte, name, 0, {"n_new": int(len(ids))}))
        return out


def estimate_rows(party_a: PartyA, ids) -> np.ndarray:
    return estimate(party_a.ren, party_a.rep_of(ids))


def _split_for_dynamic(cfg, dataset: Dataset, seed: int):
    test_size = cfg.test_size or int(round(0.2 * len(dataset)))
    return stratified_holdout(dataset.labels, test_size, stage_rng(seed, "holdout"), balanced=True)


def run_experiment(cfg, dataset: Dataset, strategies, seed: int | None = None, split=None):
    """Run a dynamic experiment for one seed; returns ``(reports, federation)``."""
    seed = cfg.seed if seed is None else seed
    pool, test = split if split is not None else _split_for_dynamic(cfg, dataset, seed)
    fed = Federation(cfg, dataset, pool, test, seed).setup()
    return fed.run(strategies), fed


def run_dvfl(cfg, dataset: Dataset, seed: int | None = None, split=None):
    return run_experiment(cfg, dataset, ["dvfl"], seed, split)


def run_baseline(strategy: str, cfg, dataset: Dataset, seed: int | None = None, split=None):
    if strategy not in ("retrain", "finetune", "joint"):
        raise ValueError(f"unknown baseline {strategy!r}")
    return run_experiment(cfg, dataset, [strategy], seed, split)
