import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survboost.data import Dataset, TimeGrid, load_dataset, split, write_dataset
from survboost.exceptions import ParseError, SchemaError, ValidationError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    path = _write(tmp_path, "x,duration,event\n0.5,1,1\n1.5,2,0\n2.5,3,2\n")
    data = load_dataset(path)
    assert data.n_samples == 3
    assert data.k_events == 2
    assert data.t_max == 3.0
    np.testing.assert_array_equal(data.durations, [1, 2, 3])
    np.testing.assert_array_equal(data.events, [1, 0, 2])
    np.testing.assert_array_equal(data.features[:, 0], [0.5, 1.5, 2.5])


def test_negative_duration_rejected(tmp_path):
    path = _write(tmp_path, "x,duration,event\n0.5,-1,1\n")
    with pytest.raises(ValidationError):
        load_dataset(path)


def test_negative_event_rejected(tmp_path):
    path = _write(tmp_path, "x,duration,event\n0.5,1,-1\n")
    with pytest.raises(ValidationError):
        load_dataset(path)


def test_binary_events_give_single_event_case(tmp_path):
    path = _write(tmp_path, "x,duration,event\n1,1,1\n2,2,0\n3,4,1\n")
    assert load_dataset(path).k_events == 1


def test_missing_column_is_schema_error(tmp_path):
    path = _write(tmp_path, "x,duration,status\n1,1,1\n")
    with pytest.raises(SchemaError, match="event"):
        load_dataset(path)


def test_parse_error_names_row_and_column(tmp_path):
    path = _write(tmp_path, "x,duration,event\n1,1,1\n2,abc,0\n")
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.row == 2
    assert info.value.column == "duration"
    assert "row 2" in str(info.value) and "duration" in str(info.value)


def test_missing_duration_rejected(tmp_path):
    path = _write(tmp_path, "x,duration,event\n1,,1\n")
    with pytest.raises(ParseError):
        load_dataset(path)


def test_fractional_event_rejected(tmp_path):
    path = _write(tmp_path, "x,duration,event\n1,1,1.5\n")
    with pytest.raises(ParseError):
        load_dataset(path)


def test_missing_features_become_nan(tmp_path):
    path = _write(tmp_path, "a,b,duration,event\n1,,1,1\n,2,2,0\n")
    data = load_dataset(path)
    assert math.isnan(data.features[0, 1])
    assert math.isnan(data.features[1, 0])


def test_categorical_first_appearance_order(tmp_path):
    path = _write(tmp_path, "color,duration,event\nred,1,1\nblue,2,0\nred,3,1\n,4,0\n")
    data = load_dataset(path)
    assert data.categories == {"color": ("red", "blue")}
    np.testing.assert_array_equal(data.features[:3, 0], [0, 1, 0])
    assert math.isnan(data.features[3, 0])


def test_known_categories_reused_and_unseen_are_missing(tmp_path):
    path = _write(tmp_path, "color,duration,event\nblue,1,1\ngreen,2,0\n")
    data = load_dataset(path, categories={"color": ("red", "blue")})
    assert data.features[0, 0] == 1
    assert math.isnan(data.features[1, 0])


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 3))
    x[5, 1] = np.nan
    data = Dataset(x, rng.exponential(size=50), rng.integers(0, 3, size=50))
    write_dataset(data, tmp_path / "rt.csv")
    again = load_dataset(tmp_path / "rt.csv")
    assert again.features.tobytes() == data.features.tobytes()
    assert again.durations.tobytes() == data.durations.tobytes()
    np.testing.assert_array_equal(again.events, data.events)


def test_round_trip_with_categories(tmp_path):
    path = _write(tmp_path, "color,x,duration,event\nred,0.1,1,1\nblue,0.2,2,0\n")
    data = load_dataset(path)
    write_dataset(data, tmp_path / "out.csv")
    again = load_dataset(tmp_path / "out.csv")
    assert again.categories == data.categories
    assert again.features.tobytes() == data.features.tobytes()


def _toy(n):
    return Dataset(np.arange(n, dtype=float).reshape(-1, 1), np.arange(1, n + 1), np.ones(n))


def test_split_deterministic():
    data = _toy(10)
    a_train, a_test = split(data, 0.3, seed=7)
    b_train, b_test = split(data, 0.3, seed=7)
    np.testing.assert_array_equal(a_test.features, b_test.features)
    np.testing.assert_array_equal(a_train.features, b_train.features)


def test_split_sizes():
    train, test = split(_toy(10), 0.3, seed=7)
    assert test.n_samples == 3
    assert train.n_samples == 7


def test_split_single_row_fails():
    with pytest.raises(ValidationError):
        split(_toy(1), 0.3, seed=0)


def test_split_recomputes_t_max():
    data = _toy(10)
    train, test = split(data, 0.3, seed=1)
    assert train.t_max == train.durations.max()
    assert test.t_max == test.durations.max()
    assert max(train.t_max, test.t_max) == data.t_max


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 200), frac=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_split_is_partition(n, frac, seed):
    data = _toy(n)
    try:
        train, test = split(data, frac, seed)
    except ValidationError:
        assert n - max(1, math.floor(n * frac)) < 1
        return
    ids = np.concatenate([train.features[:, 0], test.features[:, 0]])
    assert sorted(ids.tolist()) == list(range(n))


def test_dataset_rejects_bad_rows():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 1)), [1.0, np.nan], [1, 0])
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 1)), [1.0, 2.0], [1, 0], k_events=0)


def test_dataset_is_read_only():
    data = _toy(3)
    with pytest.raises(ValueError):
        data.durations[0] = 5.0


def test_time_grid_validation():
    assert len(TimeGrid([0.0, 1.0, 2.0])) == 3
    with pytest.raises(ValidationError):
        TimeGrid([1.0, 1.0])
    with pytest.raises(ValidationError):
        TimeGrid([-1.0, 1.0])
