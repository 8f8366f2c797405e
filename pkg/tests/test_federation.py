import numpy as np
import pytest

from vflsim.config import RunConfig
from vflsim.data import Dataset, make_synthetic
from vflsim.errors import InfeasibleTimelineError, ProtocolError, SplitError, StageError, TrainingError
from vflsim.federation import (
    MODES,
    Federation,
    assert_privacy,
    build_timeline,
    class_shares,
    payload_leaks_rows,
    run_baseline,
    run_dvfl,
    run_experiment,
    stage_rng,
    vertical_split,
)
from vflsim.paillier import MockPaillier, Paillier, PrivateKey
from vflsim.protocol import ALLOWED_TYPES, Channel, MsgType


def small_cfg(**kw):
    base = dict(
        dataset="synthetic", mode="random", T=5, rep_dim=8, ae_hidden=12, ae_epochs=2, ren_epochs=2,
        perturber_epochs=2, clf_epochs=3, batch_size=32, test_size=60, synthetic_samples=400, synthetic_features=10,
    )
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def synth():
    return make_synthetic(400, 10, seed=1)


def pool_labels(n_pos, n_neg):
    labels = np.array([1] * n_pos + [0] * n_neg)
    return np.arange(len(labels)), labels


# -- vertical split ------------------------------------------------------------


def test_split_32_features(rng):
    ds = Dataset("d", rng.normal(size=(5, 32)), np.zeros(5, int), 2, [f"f{i}" for i in range(32)])
    x_a, y, x_b, split = vertical_split(ds, 0.5)
    assert x_a.shape[1] == x_b.shape[1] == 16
    np.testing.assert_array_equal(split.reassemble(x_a, x_b), ds.features)


def test_split_rounds_up_for_a(rng):
    ds = Dataset("d", rng.normal(size=(3, 5)), np.zeros(3, int), 2, list("abcde"))
    x_a, _, x_b, _ = vertical_split(ds, 0.5)
    assert (x_a.shape[1], x_b.shape[1]) == (3, 2)


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.2])
def test_split_fraction_bounds(rng, fraction):
    ds = Dataset("d", rng.normal(size=(3, 4)), np.zeros(3, int), 2, list("abcd"))
    with pytest.raises(SplitError):
        vertical_split(ds, fraction)


def test_split_needs_two_features(rng):
    ds = Dataset("d", rng.normal(size=(3, 1)), np.zeros(3, int), 2, ["a"])
    with pytest.raises(SplitError):
        vertical_split(ds, 0.5)


# -- timeline --------------------------------------------------------------------


def test_uniform_mode_is_balanced():
    ids, labels = pool_labels(1000, 1000)
    tl = build_timeline("uniform", 5, ids, labels, seed=0)
    for t in range(6):
        arr = tl.arrival(t)
        assert labels[arr].sum() * 2 == len(arr)
        assert tl.class_ratio(t).endswith("(1:1)")
    assert tl.class_ratio(1) == "15.0% : 15.0% (1:1)"


def test_asc_vs_des_ends_at_one_to_nine():
    ids, labels = pool_labels(1000, 1000)
    tl = build_timeline("asc_vs_des", 5, ids, labels, seed=0)
    arr = tl.arrival(5)
    assert labels[arr].sum() * 9 == (len(arr) - labels[arr].sum())
    assert tl.class_ratio(5) == "3.2% : 28.8% (1:9)"


def test_random_mode_schedule():
    ids, labels = pool_labels(1500, 1500)
    tl = build_timeline("random", 5, ids, labels, seed=0)
    assert tl.class_ratio(1) == "23.3% : 10.0% (7:3)"
    assert tl.class_ratio(3) == "3.3% : 30.0% (1:9)"


def test_static_single_arrival():
    ids, labels = pool_labels(30, 20)
    tl = build_timeline("random", 0, ids, labels, seed=0)
    np.testing.assert_array_equal(np.sort(tl.arrival(0)), ids)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("T", [1, 3, 5, 7])
def test_timeline_conservation(mode, T):
    ids, labels = pool_labels(333, 667)
    tl = build_timeline(mode, T, ids, labels, seed=T)
    arrivals = [tl.arrival(t) for t in range(T + 1)]
    allv = np.concatenate(arrivals)
    assert len(allv) == len(np.unique(allv)) == len(ids)
    np.testing.assert_array_equal(np.sort(tl.overlap(T)), ids)
    assert len(tl.overlap(0)) == len(tl.arrival(0))
    for t in range(1, T + 1):
        np.testing.assert_array_equal(np.sort(tl.delta_overlap(t)), np.sort(tl.arrival(t)))


@pytest.mark.parametrize("mode", MODES)
def test_class_shares_sum_to_one(mode):
    for T in (0, 2, 5, 9):
        pos, neg = class_shares(mode, T, seed=3)
        assert len(pos) == T + 1
        assert pos.sum() == pytest.approx(1.0) and neg.sum() == pytest.approx(1.0)


def test_timeline_needs_both_classes():
    with pytest.raises(InfeasibleTimelineError):
        build_timeline("random", 5, np.arange(10), np.ones(10, int), seed=0)


def test_timeline_deterministic():
    ids, labels = pool_labels(300, 300)
    a = build_timeline("random", 5, ids, labels, seed=4)
    b = build_timeline("random", 5, ids, labels, seed=4)
    for t in range(6):
        np.testing.assert_array_equal(a.arrival(t), b.arrival(t))


def test_stage_rng_independent_streams():
    assert stage_rng(0, "a").random() != stage_rng(0, "b").random()
    assert stage_rng(0, "a", 1).random() == stage_rng(0, "a", 1).random()


# -- end to end --------------------------------------------------------------------


@pytest.fixture(scope="module")
def dynamic_run(synth):
    return run_experiment(small_cfg(), synth, ["dvfl", "retrain", "finetune", "joint"], seed=0)


def test_report_shape(dynamic_run):
    reports, fed = dynamic_run
    assert len(reports) == 6 * 4
    assert {(r.timestamp, r.strategy) for r in reports} == {
        (t, s) for t in range(6) for s in ("dvfl", "retrain", "finetune", "joint")
    }
    t0 = [r for r in reports if r.timestamp == 0]
    assert len({r.macro_f1 for r in t0}) == 1


def test_privacy_structure(dynamic_run):
    _, fed = dynamic_run
    assert {m.variant for m in fed.channel.log} <= ALLOWED_TYPES
    assert set(fed.privacy["types"]) == {t.value for t in MsgType}
    for obj in [fed.party_a, *vars(fed.party_a).values()]:
        assert not isinstance(obj, (Paillier, MockPaillier, PrivateKey))
    assert not hasattr(fed.party_b, "ren")


def test_message_accounting(dynamic_run):
    _, fed = dynamic_run
    cfg = fed.cfg
    n0 = len(fed.timeline.arrival(0))
    batches = -(-n0 // cfg.batch_size)
    ren_msgs = cfg.ren_epochs * batches * 4
    first = [m.variant for m in fed.channel.log[:ren_msgs]]
    assert first[:4] == [MsgType.ESTIMATED_REPS, MsgType.ENC_GRAD_WRT_ESTIMATE, MsgType.ENC_PARAM_GRAD,
                         MsgType.DEC_PARAM_GRAD]
    assert first.count(MsgType.ESTIMATED_REPS) == ren_msgs // 4


def test_privacy_violation_detected(dynamic_run):
    _, fed = dynamic_run
    ch = Channel()
    ch.log.extend(fed.channel.log[:4])
    ch.send(MsgType.ESTIMATED_REPS, {"ids": np.arange(2), "reps": np.hstack([np.zeros((2, 1)), fed.x_b[:2]])}, "A", "B")
    with pytest.raises(ProtocolError, match="raw feature row"):
        assert_privacy(fed.party_a, fed.party_b, ch, fed.x_a, fed.x_b)


def test_private_key_in_a_detected(dynamic_run):
    _, fed = dynamic_run
    fed.party_a.stolen = fed.party_b.he
    try:
        with pytest.raises(ProtocolError, match="decryption key"):
            assert_privacy(fed.party_a, fed.party_b, Channel(), fed.x_a, fed.x_b)
    finally:
        del fed.party_a.stolen


def test_payload_leak_helper(rng):
    raw = rng.normal(size=(5, 3))
    assert payload_leaks_rows([np.hstack([rng.normal(size=(2, 2)), raw[[3, 1]]])], raw)
    assert not payload_leaks_rows([raw[:, :2]], raw)
    assert not payload_leaks_rows([rng.normal(size=(4, 6))], raw)


def test_deterministic_reports_and_logs(synth, dynamic_run):
    reports, fed = dynamic_run
    again, fed2 = run_experiment(small_cfg(), synth, ["dvfl", "retrain", "finetune", "joint"], seed=0)
    strip = lambda rs: [{k: v for k, v in r.to_dict().items() if k != "update_seconds"} for r in rs]
    assert strip(reports) == strip(again)
    assert fed.channel.records() == fed2.channel.records()


def test_encoders_train_without_messages(synth):
    cfg = small_cfg()
    fed = Federation(cfg, synth, np.arange(300), np.arange(300, 400), 0)
    fed._partition()
    fed.timeline = fed._build_timeline()
    fed.party_b.receive_rows(fed.timeline.arrival(0), fed.x_b[fed.timeline.arrival(0)])
    fed.party_a.set_overlap(fed.timeline.overlap(0))
    fed._train_encoders()
    assert len(fed.channel) == 0


def test_lambda_zero_matches_plain_ce_finetune(synth):
    cfg = small_cfg(lam=0.0, finetune_lr_factor=1.0)
    reports, _ = run_experiment(cfg, synth, ["dvfl", "finetune"], seed=2)
    by = {(r.timestamp, r.strategy): r for r in reports}
    for t in range(6):
        assert by[(t, "dvfl")].confusion == by[(t, "finetune")].confusion
        assert by[(t, "dvfl")].macro_f1 == by[(t, "finetune")].macro_f1


def test_lambda_zero_snapshots_bit_identical(synth):
    cfg = small_cfg(lam=0.0, finetune_lr_factor=1.0, T=2)
    _, fed = run_experiment(cfg, synth, ["dvfl", "finetune"], seed=2)
    for a, b in zip(fed.party_a.snapshots["dvfl"], fed.party_a.snapshots["finetune"]):
        np.testing.assert_array_equal(a.net.get_flat(), b.net.get_flat())


def test_static_equals_single_arrival_dynamic(synth):
    cfg = small_cfg(T=0)
    split = (np.arange(300), np.arange(300, 400))
    a, _ = run_dvfl(cfg, synth, seed=1, split=split)
    fed = Federation(cfg, synth, *split, seed=1).setup()
    b = fed.run(["dvfl"])
    assert [r.confusion for r in a] == [r.confusion for r in b]
    assert len(a) == 1


def test_baseline_entry_point(synth):
    reports, fed = run_baseline("joint", small_cfg(T=2), synth, seed=0)
    assert {r.strategy for r in reports} == {"joint"} and len(reports) == 3
    with pytest.raises(ValueError):
        run_baseline("dvfl", small_cfg(), synth)


def test_retrain_estimator_flag(synth):
    reports, fed = run_experiment(small_cfg(T=2, retrain_estimator=True), synth, ["dvfl"], seed=0)
    assert len(fed.ren_trace) == 3 * (small_cfg().ren_epochs + 1)
    assert len(reports) == 3


def test_stage_tagged_divergence(synth):
    cfg = small_cfg(ae_lr=50.0, ae_epochs=3)
    with pytest.raises(StageError) as info:
        Federation(cfg, synth, np.arange(300), np.arange(300, 400), 0).setup()
    assert info.value.stage == "encoding"
    assert isinstance(info.value.cause, TrainingError)


def test_nonfed_references(synth):
    fed = Federation(small_cfg(T=0), synth, np.arange(300), np.arange(300, 400), 0).setup()
    refs = fed.nonfed_reports()
    assert [r.strategy for r in refs] == ["nonfed_without_b", "nonfed_with_b"]
    assert all(0 <= r.macro_f1 <= 1 for r in refs)
