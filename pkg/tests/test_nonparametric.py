import numpy as np
import pytest

from survboost.data import Dataset
from survboost.exceptions import ValidationError
from survboost.nonparametric import (
    StepFunction,
    aalen_johansen,
    censoring_km,
    kaplan_meier,
    survival_km,
)


def _data(durations, events):
    n = len(durations)
    return Dataset(np.zeros((n, 1)), durations, events)


def test_km_hand_fixture():
    s = kaplan_meier([1, 2, 3], [1, 0, 1])
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 2.9, 3.0, 10.0])
    expected = [1, 1, 2 / 3, 2 / 3, 2 / 3, 2 / 3, 0, 0]
    np.testing.assert_allclose(s(t), expected, rtol=0, atol=1e-12)


def test_km_no_events_is_one():
    s = kaplan_meier([1, 2, 3], [0, 0, 0])
    np.testing.assert_array_equal(s([0, 1, 5]), [1, 1, 1])


def test_km_without_censoring_is_empirical_survival():
    rng = np.random.default_rng(0)
    d = np.round(rng.exponential(size=200), 2)
    s = kaplan_meier(d, np.ones(200))
    t = np.linspace(0, d.max() + 1, 300)
    empirical = (d[None, :] > t[:, None]).mean(axis=1)
    np.testing.assert_allclose(s(t), empirical, atol=1e-12)


def test_km_empty_input():
    with pytest.raises(ValidationError):
        kaplan_meier([], [])


def test_km_left_limit():
    s = kaplan_meier([1, 2, 3], [1, 0, 1])
    assert s.left_limit(1.0) == 1.0
    assert s.left_limit(3.0) == pytest.approx(2 / 3)
    assert s(3.0) == 0.0


def test_censoring_km_hand_fixture():
    g = censoring_km(_data([1, 2, 3], [1, 0, 2]))
    np.testing.assert_allclose(g([0, 1, 1.9, 2, 2.5, 3, 7]), [1, 1, 1, 0.5, 0.5, 0.5, 0.5],
                               atol=1e-12)


def test_censoring_km_uncensored_is_one():
    g = censoring_km(_data([1, 2, 3], [1, 1, 2]))
    np.testing.assert_array_equal(g([0, 1, 2, 3, 4]), 1.0)


def test_censoring_km_all_censored_is_empirical():
    d = [1.0, 2.0, 2.0, 5.0]
    g = censoring_km(_data(d, [0, 0, 0, 0]))
    t = np.array([0, 1, 1.5, 2, 4, 5, 6])
    empirical = (np.array(d)[None, :] > t[:, None]).mean(axis=1)
    np.testing.assert_allclose(g(t), empirical, atol=1e-12)


def test_indicator_flipped_twice():
    rng = np.random.default_rng(1)
    d = rng.exponential(size=50)
    ind = rng.integers(0, 2, size=50)
    a = kaplan_meier(d, ind)
    b = kaplan_meier(d, 1 - (1 - ind))
    np.testing.assert_array_equal(a.knots, b.knots)
    np.testing.assert_array_equal(a.values, b.values)


def test_km_tie_events_before_censoring():
    # at t=2 one event and one censoring: both are at risk for the event
    s = kaplan_meier([1, 2, 2, 3], [0, 1, 0, 1])
    assert s(2.0) == pytest.approx(1 - 1 / 3, abs=1e-12)


def test_aj_hand_fixture():
    f1, f2 = aalen_johansen(_data([1, 2], [1, 2]))
    np.testing.assert_allclose(f1([0, 0.5, 1, 1.5, 2, 3]), [0, 0, 0.5, 0.5, 0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(f2([0, 0.5, 1, 1.5, 2, 3]), [0, 0, 0, 0, 0.5, 0.5], atol=1e-12)


def test_aj_hand_fixture_with_censoring():
    # durations 1..4, events [1, 0, 2, 1]
    # t=1: S-=1, n=4, d1=1 -> F1=1/4, S=3/4
    # t=3: S-=3/4, n=2, d2=1 -> F2=3/8, S=3/8
    # t=4: S-=3/8, n=1, d1=1 -> F1=1/4+3/8=5/8, S=0
    f1, f2 = aalen_johansen(_data([1, 2, 3, 4], [1, 0, 2, 1]))
    t = np.array([1, 2, 3, 4])
    np.testing.assert_allclose(f1(t), [0.25, 0.25, 0.25, 0.625], atol=1e-12)
    np.testing.assert_allclose(f2(t), [0, 0, 0.375, 0.375], atol=1e-12)


def test_aj_single_event_is_one_minus_km():
    rng = np.random.default_rng(2)
    d = rng.exponential(size=100)
    e = rng.integers(0, 2, size=100)
    data = _data(d, e)
    (f1,) = aalen_johansen(data)
    t = np.linspace(0, d.max() * 1.1, 500)
    np.testing.assert_allclose(f1(t), 1 - survival_km(data)(t), atol=1e-12)


def test_aj_all_censored_is_zero():
    data = Dataset(np.zeros((3, 1)), [1, 2, 3], [0, 0, 0], k_events=2)
    for f in aalen_johansen(data):
        np.testing.assert_array_equal(f([0, 1, 2, 3, 4]), 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_aj_km_consistency(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 400))
    k = int(rng.integers(1, 4))
    d = np.round(rng.exponential(size=n), int(rng.integers(1, 4)))
    e = rng.integers(0, k + 1, size=n)
    data = Dataset(np.zeros((n, 1)), d, e, k_events=k)
    cifs = aalen_johansen(data)
    surv = survival_km(data)
    grid = np.concatenate([np.unique(d), np.linspace(0, d.max() * 1.2, 1000)])
    total = sum(f(grid) for f in cifs) + surv(grid)
    assert np.max(np.abs(total - 1)) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_monotonicity_on_dense_grid(seed):
    rng = np.random.default_rng(100 + seed)
    n = 300
    data = Dataset(np.zeros((n, 1)), rng.exponential(size=n), rng.integers(0, 3, size=n))
    grid = np.linspace(0, data.t_max * 1.1, 1000)
    for s in (survival_km(data), censoring_km(data)):
        v = s(grid)
        assert np.all(np.diff(v) <= 0) and v.min() >= 0 and v.max() <= 1
    for f in aalen_johansen(data):
        v = f(grid)
        assert np.all(np.diff(v) >= 0) and v.min() >= 0 and v.max() <= 1


def test_step_function_right_continuous():
    s = StepFunction([1.0, 2.0], [0.5, 0.25], 1.0)
    assert s(0.999) == 1.0
    assert s(1.0) == 0.5
    assert s(2.0) == 0.25
    assert s(100.0) == 0.25
    assert s.to_rows() == [(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]
