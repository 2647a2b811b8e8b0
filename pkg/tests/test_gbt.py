import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from survboost.gbt import (
    Ensemble,
    GbtConfig,
    bin_features,
    boost_round,
    fit_ensemble,
    grow_tree,
    init_ensemble,
    set_threads,
)
from survboost.gbt.loss import softmax, softmax_grad_hess, weighted_log_loss


def _problem(seed, n=400, d=3, k=3, nan_frac=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    logits = np.stack([x[:, 0] * (c - 1) + 0.5 * x[:, 1] * c for c in range(k)], axis=1)
    p = softmax(logits)
    y = np.array([rng.choice(k, p=row) for row in p])
    w = rng.uniform(0.0, 3.0, n)
    w[rng.random(n) < 0.1] = 0.0
    if nan_frac:
        x[rng.random(x.shape) < nan_frac] = np.nan
    return x, y, w


def _total_loss(raw, y, w):
    p = softmax(raw)
    return float(np.sum(-w * np.log(p[np.arange(len(y)), y])))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(20, 4))
    y = rng.integers(0, 4, 20)
    w = rng.uniform(0, 2, 20)
    grad, hess = softmax_grad_hess(raw, y, w)
    h = 1e-5
    for i in range(20):
        for c in range(4):
            up, down = raw.copy(), raw.copy()
            up[i, c] += h
            down[i, c] -= h
            fd = (_total_loss(up, y, w) - _total_loss(down, y, w)) / (2 * h)
            fd2 = (_total_loss(up, y, w) - 2 * _total_loss(raw, y, w)
                   + _total_loss(down, y, w)) / h**2
            assert grad[i, c] == pytest.approx(fd, abs=1e-6)
            assert hess[i, c] == pytest.approx(fd2, abs=1e-3)


def test_zero_weight_rows_have_zero_grad():
    raw = np.zeros((3, 2))
    grad, hess = softmax_grad_hess(raw, [0, 1, 0], [1.0, 0.0, 2.0])
    assert np.all(grad[1] == 0) and np.all(hess[1] == 0)


def test_weighted_log_loss_hand_value():
    proba = np.array([[0.5, 0.5], [0.25, 0.75]])
    assert weighted_log_loss(proba, [0, 1], [2.0, 1.0]) == pytest.approx(
        (2 * math.log(2) + math.log(4 / 3)) / 2
    )


def _stump_oracle(x, grad, hess, lam, min_leaf, min_hess):
    """Exhaustive best split over every feature and every distinct cut."""
    def score(g, h):
        return g * g / (h + lam) if h + lam > 0 else 0.0

    rows = np.flatnonzero((hess != 0) | (grad != 0))
    G, H = grad[rows].sum(), hess[rows].sum()
    best = 0.0
    for j in range(x.shape[1]):
        col = x[rows, j]
        for cut in np.unique(col):
            left = col <= cut
            if left.all():
                continue
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            gl, hl = grad[rows][left].sum(), hess[rows][left].sum()
            if hl < min_hess or H - hl < min_hess:
                continue
            best = max(best, score(gl, hl) + score(G - gl, H - hl) - score(G, H))
    return best


@pytest.mark.parametrize("seed", range(10))
def test_stump_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    n = 60
    # few distinct values so that every cut is a bin boundary
    x = rng.integers(0, 8, size=(n, 3)).astype(float)
    grad = rng.normal(size=n)
    hess = rng.uniform(0.1, 1.0, n)
    lam = float(rng.choice([0.0, 1.0]))
    binned, mapper = bin_features(x)
    tree = grow_tree(binned, grad, hess, mapper, max_depth=1, l2_regularization=lam,
                     min_samples_leaf=3, min_child_weight=1e-3)
    oracle = _stump_oracle(x, grad, hess, lam, 3, 1e-3)
    G, H = grad.sum(), hess.sum()
    if tree.n_nodes == 1:
        assert oracle <= 1e-9
        return
    left = x[:, tree.feature[0]] <= tree.threshold[0]
    gl, hl = grad[left].sum(), hess[left].sum()
    gain = gl**2 / (hl + lam) + (G - gl) ** 2 / (H - hl + lam) - G**2 / (H + lam)
    assert gain == pytest.approx(oracle, rel=1e-9)
    assert tree.value[1] == pytest.approx(-gl / (hl + lam))
    assert tree.value[2] == pytest.approx(-(G - gl) / (H - hl + lam))


def test_split_tie_break_lowest_feature():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    grad = np.array([-1.0, -1.0, 1.0, 1.0])
    hess = np.ones(4)
    binned, mapper = bin_features(x)
    tree = grow_tree(binned, grad, hess, mapper, max_depth=1)
    assert tree.feature[0] == 0


def test_missing_values_follow_best_side():
    x = np.array([[0.0], [0.0], [1.0], [1.0], [np.nan], [np.nan]])
    grad = np.array([-1.0, -1.0, 1.0, 1.0, 1.0, 1.0])
    hess = np.ones(6)
    binned, mapper = bin_features(x)
    tree = grow_tree(binned, grad, hess, mapper, max_depth=1)
    assert not tree.missing_left[0]
    grad[4:] = -1.0
    tree = grow_tree(binned, grad, hess, mapper, max_depth=1)
    assert tree.missing_left[0]


def test_depth_limit():
    x, y, w = _problem(1)
    ens = fit_ensemble(x, y, w, 3, GbtConfig(n_iterations=3, max_depth=2, min_samples_leaf=1))
    for stage in ens.stages:
        for tree in stage:
            assert tree.depth <= 2


def _naive_raw(ens, x):
    raw = np.tile(ens.base_scores, (x.shape[0], 1))
    for stage in ens.stages:
        for c, tree in enumerate(stage):
            for i in range(x.shape[0]):
                node = 0
                while tree.feature[node] >= 0:
                    v = x[i, tree.feature[node]]
                    if np.isnan(v):
                        go_left = tree.missing_left[node]
                    else:
                        go_left = v <= tree.threshold[node]
                    node = tree.left[node] if go_left else tree.right[node]
                raw[i, c] += ens.learning_rate * tree.value[node]
    return raw


def test_prediction_matches_naive_traversal():
    x, y, w = _problem(2, n=300, nan_frac=0.05)
    ens = fit_ensemble(x, y, w, 3, GbtConfig(n_iterations=5, min_samples_leaf=5))
    rng = np.random.default_rng(9)
    fresh = rng.normal(size=(200, 3)) * 1.5
    fresh[rng.random(fresh.shape) < 0.05] = np.nan
    for data in (x, fresh):
        np.testing.assert_allclose(ens.predict_raw(data), _naive_raw(ens, data), atol=1e-12)


def test_base_scores_are_log_frequencies():
    y = np.array([0, 0, 1, 2, 2, 2])
    w = np.array([1.0, 1.0, 1.0, 1.0, 0.5, 0.5])
    _, mapper = bin_features(np.zeros((6, 1)))
    ens = init_ensemble(GbtConfig(), 3, mapper, y, w)
    np.testing.assert_allclose(softmax(ens.base_scores), [0.4, 0.2, 0.4])


def test_zero_learning_rate_is_constant():
    x, y, w = _problem(3)
    ens = fit_ensemble(x, y, w, 3, GbtConfig(n_iterations=3, learning_rate=0.0))
    p = ens.predict_proba(x)
    np.testing.assert_allclose(p, np.tile(softmax(ens.base_scores), (x.shape[0], 1)))


def test_training_loss_decreases():
    x, y, w = _problem(4)
    cfg = GbtConfig(n_iterations=1, learning_rate=0.1, min_samples_leaf=5)
    binned, mapper = bin_features(x)
    ens = init_ensemble(cfg, 3, mapper, y, w)
    losses = [weighted_log_loss(softmax(ens.predict_raw_binned(binned)), y, w)]
    for _ in range(10):
        ens = boost_round(ens, binned, y, w)
        losses.append(weighted_log_loss(softmax(ens.predict_raw_binned(binned)), y, w))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_determinism_across_thread_counts():
    x, y, w = _problem(5, n=2000)
    cfg = GbtConfig(n_iterations=5, min_samples_leaf=5)
    try:
        set_threads(1)
        a = fit_ensemble(x, y, w, 3, cfg)
        pa = a.predict_raw(x)
        set_threads(4)
        b = fit_ensemble(x, y, w, 3, cfg)
        pb = b.predict_raw(x)
    finally:
        set_threads(None)
    assert a.to_dict() == b.to_dict()
    assert pa.tobytes() == pb.tobytes()


def test_dict_round_trip():
    x, y, w = _problem(6, nan_frac=0.02)
    ens = fit_ensemble(x, y, w, 3, GbtConfig(n_iterations=3, min_samples_leaf=5))
    again = Ensemble.from_dict(ens.to_dict())
    assert again.predict_raw(x).tobytes() == ens.predict_raw(x).tobytes()


def test_constant_feature_never_split():
    x = np.ones((50, 1))
    rng = np.random.default_rng(0)
    binned, mapper = bin_features(x)
    tree = grow_tree(binned, rng.normal(size=50), np.ones(50), mapper)
    assert tree.n_nodes == 1


@settings(max_examples=30, deadline=None)
@given(
    x=arrays(np.float64, (40, 2), elements=st.floats(-5, 5)),
    seed=st.integers(0, 1000),
)
def test_probabilities_sum_to_one(x, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, 40)
    ens = fit_ensemble(x, y, np.ones(40), 3,
                       GbtConfig(n_iterations=2, min_samples_leaf=2, learning_rate=0.5))
    p = ens.predict_proba(rng.normal(size=(30, 2)) * 4)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_binning_missing_bin_and_edges():
    x = np.array([[1.0], [2.0], [np.nan], [3.0]])
    binned, mapper = bin_features(x, max_bins=255)
    assert list(binned[:, 0]) == [0, 1, 255, 2]
    assert mapper.threshold(0, 2) == math.inf


def test_binning_respects_max_bins():
    x = np.random.default_rng(0).normal(size=(5000, 1))
    binned, mapper = bin_features(x, max_bins=16)
    assert binned.max() < 16
    assert mapper.n_bins[0] <= 16
