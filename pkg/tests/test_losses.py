import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dda import losses
from dda.gradcheck import central_difference, random_labels, rel_error
from dda.losses import LossConfig
from dda.stats import ProjectedBatch, sigmoid, stats_with_gradients

LOG = LossConfig(dda_kind="logarithmic")
DELTA = LossConfig(dda_kind="delta")


def target_batch(mu0=0.2, mu1=0.8, var0=0.01, var1=0.02):
    """Two elements per class realize any requested means and unbiased variances."""
    a = math.sqrt(var0 / 2.0)
    b = math.sqrt(var1 / 2.0)
    return ProjectedBatch([mu0 - a, mu0 + a, mu1 - b, mu1 + b], [0, 0, 1, 1])


def test_target_batch_realizes_stats():
    st_ = stats_with_gradients(target_batch())
    assert (st_.mean_0, st_.mean_1, st_.var_0, st_.var_1) == pytest.approx((0.2, 0.8, 0.01, 0.02))


def test_config_defaults():
    assert (LOG.lambda_f, LOG.lambda_p) == (0.9, 0.1)
    assert (DELTA.lambda_f, DELTA.lambda_p) == (0.4, 1.0)
    assert (LOG.gamma, LOG.alpha) == (2.0, 0.25)
    assert LOG.epsilon_log == 1.0 + 1e-8


@pytest.mark.parametrize("kwargs", [dict(alpha=1.5), dict(gamma=-1), dict(epsilon_prob=1e-3),
                                    dict(lambda_f=-0.1), dict(dda_kind="cubic")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        LossConfig(**kwargs)


def test_inverse_fisher():
    st_ = stats_with_gradients(target_batch())
    assert losses.inverse_fisher(st_) == pytest.approx(0.03 / 0.36)
    st_ = stats_with_gradients(ProjectedBatch([0.1, 0.1, 0.9, 0.9], [0, 0, 1, 1]))
    assert losses.inverse_fisher(st_) == 0.0
    st_ = stats_with_gradients(ProjectedBatch([0.5, 0.5, 0.5, 0.5], [0, 0, 1, 1]))
    with pytest.raises(ZeroDivisionError, match="degenerate separation"):
        losses.inverse_fisher(st_)


def test_squared_gap_gradient():
    assert losses.squared_gap_gradient(0.3, 0.7, 1.0, 0.0) == pytest.approx(-0.8)
    assert losses.squared_gap_gradient(0.7, 0.3, 1.0, 0.0) == pytest.approx(0.8)
    assert losses.squared_gap_gradient(0.5, 0.5, 1.0, 0.0) == 0.0


def test_product_loss_values():
    assert losses.product_loss(target_batch()).value == pytest.approx(-0.6 * 0.03)
    flat = ProjectedBatch([0.1, 0.1, 0.9, 0.9], [0, 0, 1, 1])
    assert losses.product_loss(flat).value == 0.0


def test_dda_log_values():
    perfect = ProjectedBatch([0.0, 0.0, 1.0, 1.0], [0, 0, 1, 1])
    assert losses.dda_log(perfect, LOG).value == pytest.approx(math.log(1e-8) + 0.9 * math.log(1 + 1e-8))
    assert losses.dda_log(perfect, LOG).value == pytest.approx(-18.4207, abs=1e-4)
    none = ProjectedBatch([0.5] * 4, [0, 0, 1, 1])
    assert losses.dda_log(none, LOG).value == pytest.approx(0.0, abs=1e-7)
    v = losses.dda_log(target_batch(), LOG).value
    assert v == pytest.approx(math.log(0.40000001) + 0.9 * math.log(1.03000001), rel=1e-12)
    assert v == pytest.approx(-0.88968, abs=1e-5)


def test_dda_delta_values():
    assert losses.dda_delta(ProjectedBatch([0.5] * 4, [0, 0, 1, 1]), DELTA).value == 0.0
    assert losses.dda_delta(target_batch(), DELTA).value == pytest.approx(-0.588)
    best = ProjectedBatch([0.0, 0.0, 1.0, 1.0], [0, 0, 1, 1])
    assert losses.dda_delta(best, DELTA).value == -1.0


def test_one_class_batch_is_skipped():
    b = ProjectedBatch([0.2, 0.7, 0.9], [1, 1, 1])
    for fn in (losses.dda_log, losses.dda_delta, losses.product_loss):
        res = fn(b, LOG)
        assert res.value == 0.0 and not np.any(res.grad_y)
    # focal still applies
    assert losses.pdda(np.array([0.0, 1.0]), np.array([1, 1]), LOG).value > 0


def test_focal_values():
    big = losses.focal(np.array([40.0]), np.array([1]), LOG)
    assert big.value == pytest.approx(0.0, abs=1e-11)
    half = losses.focal(np.array([0.0]), np.array([1]), LOG)
    assert half.value == pytest.approx(0.25 * 0.25 * math.log(2.0), rel=1e-12)
    assert half.value == pytest.approx(0.043322, abs=1e-6)


def binary_cross_entropy(y, m):
    p = 1.0 / (1.0 + np.exp(-y))
    return -(m * np.log(p) + (1 - m) * np.log(1 - p))


def test_focal_reduces_to_half_cross_entropy(rng):
    cfg = LossConfig(gamma=0.0, alpha=0.5)
    y = rng.normal(0, 3, 50)
    m = rng.integers(0, 2, 50)
    for k in range(50):
        got = losses.focal(y[k:k + 1], m[k:k + 1], cfg).value
        assert got == pytest.approx(0.5 * binary_cross_entropy(y[k], m[k]), rel=1e-12, abs=1e-12)


def test_focal_saturated_outputs_are_finite():
    res = losses.focal(np.array([-800.0, 800.0, 800.0, -800.0]), np.array([1, 0, 1, 0]), LOG)
    assert np.isfinite(res.value) and np.all(np.isfinite(res.grad_y))


def test_pdda_combination(rng):
    y = rng.normal(size=30)
    m = random_labels(rng, 30)
    zero = LossConfig(dda_kind="delta", lambda_p=0.0)
    assert losses.pdda(y, m, zero).value == losses.focal(y, m, zero).value
    np.testing.assert_array_equal(losses.pdda(y, m, zero).grad_y, losses.focal(y, m, zero).grad_y)
    one = LossConfig(dda_kind="delta", lambda_p=1.0)
    total = losses.focal(y, m, one).value + losses.dda_delta(ProjectedBatch.from_logits(y, m), one).value
    assert losses.pdda(y, m, one).value == pytest.approx(total, abs=1e-12)


LOSSES = {
    "product": lambda y, m, c: losses.product_loss(ProjectedBatch.from_logits(y, m), c),
    "dda_log": lambda y, m, c: losses.dda_log(ProjectedBatch.from_logits(y, m), c),
    "dda_delta": lambda y, m, c: losses.dda_delta(ProjectedBatch.from_logits(y, m), c),
    "focal": losses.focal,
    "pdda": losses.pdda,
}


@pytest.mark.parametrize("name", sorted(LOSSES))
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 64), kind=st.sampled_from(["logarithmic", "delta"]))
def test_gradients_match_finite_differences(name, seed, n, kind):
    rng = np.random.default_rng(seed)
    y = rng.normal(0, 2, n)
    m = random_labels(rng, n)
    cfg = LossConfig(dda_kind=kind)
    fn = LOSSES[name]
    res = fn(y, m, cfg)
    assert res.grad_y.shape == (n,)
    assert rel_error(res.grad_y, central_difference(lambda x: fn(x, m, cfg).value, y)) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 64))
def test_directionality_and_bounds(seed, n):
    rng = np.random.default_rng(seed)
    m = random_labels(rng, n)
    b = ProjectedBatch(rng.uniform(size=n), m)
    st_ = stats_with_gradients(b)
    dgap = st_.dmean[0] - st_.dmean[1]
    np.testing.assert_allclose(dgap[m == 1], -1.0 / st_.mass_1)
    assert np.all(dgap[m == 1] < 0)
    value = losses.dda_delta(b, DELTA).value
    assert np.isfinite(value) and value >= -1.0
    assert value <= 1.0 + DELTA.lambda_f * 0.5 * 2


def test_instability_witness():
    m = np.array([0] * 8 + [1] * 8)
    wrong = np.r_[np.linspace(0.5, 1.5, 8), np.linspace(-1.5, -0.5, 8)]   # mean_0 > mean_1
    right = -wrong                                                            # mean_1 > mean_0
    for start in (wrong, right):
        s = sigmoid(start)
        mu0, mu1 = s[m == 0].mean(), s[m == 1].mean()
        # moving one class-0 element: sign of the squared-gap gradient follows the ordering
        g = losses.squared_gap_gradient(mu0, mu1, 1.0 / 8, 0.0)
        assert np.sign(g) == np.sign(mu0 - mu1)
        # the signed gap mean_0 - mean_1 always has positive derivative along class 0
        assert (1.0 / 8 - 0.0) > 0

    sq_wrong = losses.gap_descent_trace(wrong, m, squared=True, steps=50, lr=20.0)
    sq_right = losses.gap_descent_trace(right, m, squared=True, steps=50, lr=20.0)
    assert sq_wrong[-1, 0] > sq_wrong[0, 0] and sq_wrong[-1, 1] < sq_wrong[0, 1]
    assert sq_right[-1, 0] < sq_right[0, 0] and sq_right[-1, 1] > sq_right[0, 1]
    for start in (wrong, right):
        tr = losses.gap_descent_trace(start, m, squared=False, steps=50, lr=20.0)
        assert np.all(np.diff(tr[:, 0]) < 0) and np.all(np.diff(tr[:, 1]) > 0)
        assert tr[-1, 1] > tr[-1, 0]


def test_ln_versus_ten_delta_ratio_is_reported(rng):
    """Empirical: how close is 10 * delta loss to the log loss on random unit-interval batches."""
    ratios = []
    for _ in range(1000):
        n = int(rng.integers(4, 64))
        m = random_labels(rng, n)
        b = ProjectedBatch(rng.uniform(size=n), m)
        ln = losses.dda_log(b, LOG).value
        delta = losses.dda_delta(b, DELTA).value
        ratios.append(abs(10.0 * delta - ln) / max(abs(ln), 1e-12))
    q = np.quantile(ratios, [0.1, 0.5, 0.9])
    print(f"|10*delta - ln| / |ln| quantiles (10/50/90%): {q}")
    assert np.all(np.isfinite(q))
