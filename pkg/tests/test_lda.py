import numpy as np
import pytest

from dda import data, lda


def gaussian_pair(rng, n, shift=(1.0, 0.0)):
    x0 = rng.normal(size=(n, 2))
    x1 = rng.normal(size=(n, 2)) + np.array(shift)
    return np.vstack([x0, x1]), np.r_[np.zeros(n, int), np.ones(n, int)]


def test_direction_aligns_with_mean_difference():
    rng = np.random.default_rng(7)
    x, m = gaussian_pair(rng, 5000)
    disc = lda.fit_lda(x, m)
    diff = x[m == 1].mean(0) - x[m == 0].mean(0)
    cos = disc.weights @ diff / np.linalg.norm(diff)
    assert np.degrees(np.arccos(min(cos, 1.0))) < 5.0
    assert np.linalg.norm(disc.weights) == pytest.approx(1.0)
    proj = lda.project(disc, x)
    assert proj[m == 1].mean() > proj[m == 0].mean()


def test_scale_invariance_of_objective(rng):
    x, m = gaussian_pair(rng, 300, shift=(1.0, 0.5))
    base = lda.fisher_objective(lda.fit_lda(x, m), x, m)
    for c in (0.01, 100.0):
        xs = c * x
        assert lda.fisher_objective(lda.fit_lda(xs, m), xs, m) == pytest.approx(base, rel=1e-9)


def test_threshold_scales_with_weights(rng):
    x, m = gaussian_pair(rng, 200)
    disc = lda.fit_lda(x, m)
    lda.fit_threshold(disc, x, m)
    before = lda.predict(disc, x)
    disc.weights = 3.0 * disc.weights
    disc.threshold *= 3.0
    np.testing.assert_array_equal(lda.predict(disc, x), before)


@pytest.mark.parametrize("seed", range(5))
def test_xor_is_linearly_inseparable(seed):
    # a single cut can at best peel one corner blob off the other three
    ds = data.gen_xor(500, 0.15, seed)
    disc = lda.fit_lda(ds.features, ds.labels)
    assert lda.best_cut_accuracy(lda.project(disc, ds.features), ds.labels) <= 0.76
    # axis-aligned projections mix both classes completely
    for axis in ([1.0, 0.0], [0.0, 1.0]):
        flat = lda.LinearDiscriminant(np.array(axis))
        assert lda.best_cut_accuracy(lda.project(flat, ds.features), ds.labels) <= 0.56


def test_singular_scatter_is_regularized():
    x = np.array([[0.0, 1.0], [1.0, 1.0], [3.0, 1.0], [4.0, 1.0]])
    disc = lda.fit_lda(x, [0, 0, 1, 1])
    assert disc.regularization > 0
    assert np.all(np.isfinite(disc.weights)) and np.any(disc.weights != 0)


def test_errors():
    with pytest.raises(ValueError):
        lda.fit_lda(np.zeros((4, 2)), [0, 0, 0, 0])
    disc = lda.LinearDiscriminant(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        lda.project(disc, np.zeros((3, 3)))


def test_project_examples():
    disc = lda.LinearDiscriminant(np.array([1.0, 0.0]))
    assert lda.project(disc, [[3.0, 5.0]])[0] == 3.0
    assert lda.project(disc, [[0.0, 7.0]])[0] == 0.0
    disc = lda.LinearDiscriminant(np.array([0.0, 0.0, 1.0]))
    assert lda.project(disc, [[4.0, 5.0, 6.0]])[0] == 6.0


def test_best_cut_accuracy_brute_force(rng):
    v = rng.normal(size=40)
    m = rng.integers(0, 2, 40)
    brute = 0.0
    for t in np.r_[v, np.inf]:
        acc = np.mean((v >= t).astype(int) == m)
        brute = max(brute, acc, 1 - acc)
    assert lda.best_cut_accuracy(v, m) == pytest.approx(brute)
