import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vflsim import nn
from vflsim.classification import (
    DistillConfig,
    ClassifierSnapshot,
    build_classifier,
    ce_loss,
    combined_loss,
    concat_reps,
    distill_loss,
    inverse_frequency_weights,
    load_snapshots,
    objective_and_grad,
    one_hot,
    save_snapshots,
    softened_softmax,
    train_classifier_t,
)
from vflsim.errors import ShapeError

logits = arrays(np.float64, (4, 3), elements=st.floats(-20, 20))


def entropy(p):
    return float(-np.sum(p * np.log(p)) / p.shape[0])


def test_concat_reps(rng):
    a, b = rng.normal(size=(3, 200)), rng.normal(size=(3, 200))
    out = concat_reps(a, b)
    assert out.shape == (3, 400)
    np.testing.assert_array_equal(out[0], np.r_[a[0], b[0]])
    np.testing.assert_array_equal(concat_reps(a, np.zeros((3, 0))), a)
    with pytest.raises(ShapeError):
        concat_reps(a, b[:2])


def test_softened_softmax_examples():
    np.testing.assert_allclose(softened_softmax(np.zeros((2, 4)), 2.0), 0.25)
    np.testing.assert_allclose(softened_softmax(np.array([[0.0, np.log(3)]]), 1.0), [[0.25, 0.75]])
    x = np.random.default_rng(0).uniform(-1, 1, size=(10, 3))
    assert np.abs(softened_softmax(x, 100.0) - 1 / 3).max() <= 0.01


@settings(max_examples=100, deadline=None)
@given(logits, st.floats(-50, 50), st.floats(0.1, 10))
def test_softmax_rows_and_shift_invariance(z, c, temp):
    p = softened_softmax(z, temp)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softened_softmax(z + c, temp), p, atol=1e-12)


def test_distill_examples(rng):
    assert distill_loss(np.zeros((1, 2)), np.zeros((1, 2)), 2.0) == pytest.approx(np.log(2))
    t = rng.normal(size=(5, 3))
    assert distill_loss(t, t, 2.0) == pytest.approx(entropy(softened_softmax(t, 2.0)), abs=1e-12)


def test_distill_matches_direct_sum(rng):
    t, s = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    F = 2.0
    total = 0.0
    for i in range(6):
        pt = [np.exp(t[i, c] / F) for c in range(3)]
        ps = [np.exp(s[i, c] / F) for c in range(3)]
        for c in range(3):
            total -= pt[c] / sum(pt) * np.log(ps[c] / sum(ps))
    assert distill_loss(t, s, F) == pytest.approx(total / 6, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(logits, logits, st.floats(0.5, 5))
def test_gibbs_inequality(t, s, temp):
    h = entropy(softened_softmax(t, temp))
    assert distill_loss(t, s, temp) >= h - 1e-10
    assert distill_loss(t, t, temp) == pytest.approx(h, abs=1e-10)


def test_ce_examples():
    y = one_hot([0], 2)
    assert ce_loss(y, np.array([[50.0, -50.0]])) == pytest.approx(0.0, abs=1e-12)
    assert ce_loss(y, np.zeros((1, 2))) == pytest.approx(np.log(2))
    assert ce_loss(y, np.zeros((1, 2)), [2.0, 1.0]) == pytest.approx(2 * np.log(2))


def test_ce_unit_weights_is_standard_ce(rng):
    z = rng.normal(size=(8, 4))
    labels = rng.integers(4, size=8)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    assert ce_loss(one_hot(labels, 4), z) == pytest.approx(-np.mean(np.log(p[np.arange(8), labels])), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_combined_loss_affine(l1, l2, d, c):
    mid = combined_loss(d, c, 0.5 * (l1 + l2))
    assert mid == pytest.approx(0.5 * (combined_loss(d, c, l1) + combined_loss(d, c, l2)), abs=1e-12)
    assert combined_loss(d, c, 0.0) == c and combined_loss(d, c, 1.0) == d


def test_distill_config_validation():
    assert DistillConfig().temperature == 2.0 and DistillConfig().lam == 0.95
    for bad in ({"temperature": 0}, {"lam": 1.5}, {"class_weights": (1.0, 0.0)}):
        with pytest.raises(ValueError):
            DistillConfig(**bad)


def test_objective_gradient_matches_finite_differences(rng):
    net = build_classifier(6, 3, rng, hidden=5)
    x = rng.normal(size=(4, 6))
    y = one_hot(rng.integers(3, size=4), 3)
    teacher = rng.normal(size=(4, 3))
    cfg = DistillConfig(2.0, 0.7)
    w = np.array([1.0, 2.0, 0.5])
    err = nn.finite_diff_check(
        net, x, lambda o: objective_and_grad(o, y, teacher, cfg, w)[0], lambda o: objective_and_grad(o, y, teacher, cfg, w)[1]
    )
    assert err <= 1e-4


def test_inverse_frequency_weights():
    np.testing.assert_allclose(inverse_frequency_weights([0, 0, 0, 1], 2), [4 / 6, 2.0])
    np.testing.assert_allclose(inverse_frequency_weights([0, 0], 2), [0.5, 1.0])


def test_t0_path_is_plain_ce(rng):
    x = rng.normal(size=(40, 5))
    y = (x[:, 0] > 0).astype(int)
    init = build_classifier(5, 2, rng, hidden=4)
    a = train_classifier_t(None, x, y, DistillConfig(lam=0.95), 5, 0.1, seed=3, init=init)
    b = train_classifier_t(None, x, y, DistillConfig(lam=0.0), 5, 0.1, seed=3, init=init)
    np.testing.assert_array_equal(a.net.get_flat(), b.net.get_flat())


def test_prev_is_not_modified_and_lambda_one_is_stationary(rng):
    x = rng.normal(size=(30, 5))
    y = rng.integers(2, size=30)
    prev = train_classifier_t(None, x, y, DistillConfig(), 3, 0.1, seed=0, n_classes=2)
    before = prev.net.get_flat()
    new = train_classifier_t(prev, x, y, DistillConfig(lam=1.0), 1, 0.1, seed=1)
    np.testing.assert_array_equal(prev.net.get_flat(), before)
    assert np.abs(new.net.get_flat() - before).max() <= 1e-12
    assert new.timestamp == 1


def test_learns_separable_data(rng):
    x = rng.normal(size=(200, 4))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    snap = train_classifier_t(None, x, y, DistillConfig(), 100, 0.1, seed=0, n_classes=2)
    assert (snap.predict(x) == y).mean() > 0.9
    np.testing.assert_allclose(snap.predict_proba(x).sum(axis=1), 1.0)


def test_snapshot_checkpoint(tmp_path, rng):
    snaps = [ClassifierSnapshot(build_classifier(4, 2, rng, 3), t, [float(t)]) for t in range(3)]
    save_snapshots(snaps, tmp_path / "clf.json")
    back = load_snapshots(tmp_path / "clf.json")
    assert sorted(back) == [0, 1, 2]
    np.testing.assert_array_equal(back[2].net.get_flat(), snaps[2].net.get_flat())


def test_shape_mismatch(rng):
    prev = ClassifierSnapshot(build_classifier(4, 2, rng, 3), 0)
    with pytest.raises(ShapeError):
        train_classifier_t(prev, np.zeros((3, 5)), np.zeros(3, dtype=int), DistillConfig(), 1, 0.1)
