import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vflsim.correction import DEFAULT_DELTA, Perturber, indicator, perturb, perturber_loss, train_perturber
from vflsim.errors import ShapeError
from vflsim.estimation import ren_loss


def test_indicator_examples():
    np.testing.assert_array_equal(indicator([0.6, -0.7, 0.3, -0.5, 0.5, 0.0]), [1, -1, 0, 0, 0, 0])
    assert not indicator(np.zeros((3, 3))).any()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-10, 10)), st.floats(0.51, 5.0))
def test_indicator_range_and_idempotence(x, delta):
    p = indicator(x)
    assert set(np.unique(p)) <= {-1.0, 0.0, 1.0}
    q = indicator(delta * p)
    np.testing.assert_array_equal(q, p)


def test_default_magnitudes():
    assert DEFAULT_DELTA == {"dcc": 0.6, "bcw": 1.0, "eps5k": 0.6, "har": 0.5}
    with pytest.raises(ValueError):
        Perturber.build(3, 0.0, np.random.default_rng(0))


def test_untrained_perturber_is_identity(rng):
    p = Perturber.build(6, 1.0, rng)
    r = rng.normal(size=(5, 6))
    eps, r_hat = perturb(p, r)
    assert not eps.any()
    np.testing.assert_array_equal(r_hat, r)


def test_single_component_shift(rng):
    p = Perturber.build(3, 1.0, rng)
    last = p.net.layers[-1]
    last.weight[...] = 0.0
    last.bias[...] = [0.9, 0.0, -0.2]
    eps, r_hat = perturb(p, np.zeros((1, 3)))
    np.testing.assert_array_equal(eps, [[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(r_hat, [[1.0, 0.0, 0.0]])


def test_perturb_shape_error(rng):
    with pytest.raises(ShapeError):
        perturb(Perturber.build(3, 1.0, rng), np.zeros((2, 4)))


def test_perturber_loss_examples(rng):
    r = rng.normal(size=(3, 4))
    assert perturber_loss(r, r) == 0.0
    delta = 0.6
    hat = np.zeros((1, 4))
    hat[0, 0] = delta
    assert perturber_loss(np.zeros((1, 4)), hat) == pytest.approx(delta**2)
    est = rng.normal(size=(3, 4))
    assert perturber_loss(r, est + 0.0) == ren_loss(r, est)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), delta=st.floats(0.1, 3.0))
def test_perturbation_bounded(seed, delta):
    rng = np.random.default_rng(seed)
    p = Perturber.build(5, delta, rng)
    for layer in p.net.layers:
        layer.weight[...] = rng.normal(scale=3.0, size=layer.weight.shape)
    r = rng.normal(scale=5.0, size=(7, 5))
    eps, r_hat = perturb(p, r)
    assert np.abs(eps).max() <= delta
    # r_hat - r recovers eps up to one rounding of the addition
    assert np.all(np.abs(r_hat - r) <= delta + 4 * np.finfo(float).eps * np.maximum(np.abs(r), delta))
    assert set(np.unique(np.abs(eps))) <= {0.0, delta}


def test_zero_lr_unchanged(rng):
    p = Perturber.build(4, 0.6, rng)
    before = p.net.get_flat()
    train_perturber(p, rng.normal(size=(20, 4)), rng.normal(size=(20, 4)), epochs=3, lr=0.0)
    np.testing.assert_array_equal(p.net.get_flat(), before)


def test_sign_pattern_recovered(rng):
    d, n, delta = 30, 512, 0.6
    s = rng.integers(-1, 2, size=d).astype(float)
    est = rng.normal(size=(n, d))
    p = Perturber.build(d, delta, rng)
    train_perturber(p, est + delta * s, est, epochs=100, seed=1)
    assert (indicator(p.net(est)) == s).mean() >= 0.9


def test_correction_never_hurts_training_pairs(rng):
    true = rng.normal(size=(100, 8))
    est = true + rng.normal(scale=0.2, size=true.shape)
    p = Perturber.build(8, 1.0, rng)
    train_perturber(p, true, est, epochs=10, lr=0.05)
    assert perturber_loss(true, perturb(p, est)[1]) <= ren_loss(true, est) + 1e-8


def test_misaligned_pairs(rng):
    with pytest.raises(ShapeError):
        train_perturber(Perturber.build(3, 1.0, rng), np.zeros((4, 3)), np.zeros((5, 3)))
