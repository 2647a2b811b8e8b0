"""Dataset container, CSV ingestion and train/test splitting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ParseError, SchemaError, ValidationError

DEFAULT_TEST_FRACTION = 0.3


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Covariates plus right-censored competing-risks outcomes.

    ``events[i] == 0`` marks a censored row, ``1..k_events`` the observed event.
    Missing covariates are stored as NaN.  ``categories`` maps the name of each
    ordinal-encoded feature column to its category list (code = list index).
    """

    features: np.ndarray
    durations: np.ndarray
    events: np.ndarray
    k_events: int | None = None
    feature_names: tuple[str, ...] = ()
    categories: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        durations = np.asarray(self.durations, dtype=np.float64).ravel()
        events_raw = np.asarray(self.events).ravel()
        n = durations.shape[0]
        if n < 1:
            raise ValidationError("a dataset needs at least one row")
        if features.shape[0] != n or events_raw.shape[0] != n:
            raise ValidationError(
                f"length mismatch: {features.shape[0]} feature rows, "
                f"{n} durations, {events_raw.shape[0]} events"
            )
        if not np.all(np.isfinite(durations)):
            raise ValidationError("durations must be finite (no NaN or inf)")
        if np.any(durations < 0):
            raise ValidationError("durations must be nonnegative")
        if np.issubdtype(events_raw.dtype, np.floating):
            if not np.all(np.isfinite(events_raw)) or np.any(events_raw != np.round(events_raw)):
                raise ValidationError("event labels must be integers")
        events = events_raw.astype(np.int64)
        if np.any(events < 0):
            raise ValidationError("event labels must be >= 0")
        if np.any(np.isinf(features)):
            raise ValidationError("features must be finite or NaN (missing)")
        k = int(events.max()) if self.k_events is None else int(self.k_events)
        if events.max() > k:
            raise ValidationError(f"event label {int(events.max())} exceeds k_events={k}")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(features.shape[1]))
        if len(names) != features.shape[1]:
            raise ValidationError("feature_names does not match the number of feature columns")

        object.__setattr__(self, "features", _frozen(features, np.float64))
        object.__setattr__(self, "durations", _frozen(durations, np.float64))
        object.__setattr__(self, "events", _frozen(events, np.int64))
        object.__setattr__(self, "k_events", k)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(
            self, "categories", {c: tuple(v) for c, v in dict(self.categories).items()}
        )

    @property
    def n_samples(self) -> int:
        return self.durations.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def t_max(self) -> float:
        return float(self.durations.max())

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(self.events == 0))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.durations[idx],
            self.events[idx],
            k_events=self.k_events,
            feature_names=self.feature_names,
            categories=self.categories,
        )

    def require_events(self):
        if not np.any(self.events != 0):
            raise ValidationError("at least one uncensored row is required for fitting")


@dataclass(frozen=True)
class TimeGrid:
    horizons: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.horizons, dtype=np.float64).ravel()
        if h.size == 0:
            raise ValidationError("time grid is empty")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise ValidationError("time grid values must be finite and >= 0")
        if np.any(np.diff(h) <= 0):
            raise ValidationError("time grid must be strictly increasing")
        object.__setattr__(self, "horizons", _frozen(h, np.float64))

    def __len__(self):
        return self.horizons.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.horizons if dtype is None else self.horizons.astype(dtype)


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        return None


def load_dataset(
    path,
    duration_col: str = "duration",
    event_col: str = "event",
    feature_cols: Sequence[str] | None = None,
    categorical_cols: Sequence[str] = (),
    categories: Mapping[str, Sequence[str]] | None = None,
    k_events: int | None = None,
) -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    Feature columns default to every column other than the duration and event
    columns.  A feature column is ordinal-encoded (first-appearance order) when
    it is listed in ``categorical_cols`` or contains a non-numeric cell.  Pass
    ``categories`` (e.g. from a fitted model) to reuse an existing encoding;
    unseen categories are then treated as missing.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty, a header row is required") from None
        rows = [r for r in reader if r]

    header = [h.strip() for h in header]
    col_index = {name: j for j, name in enumerate(header)}
    for name in (duration_col, event_col):
        if name not in col_index:
            raise SchemaError(f"column {name!r} not found in {path} (columns: {header})")
    if feature_cols is None:
        feature_cols = [h for h in header if h not in (duration_col, event_col)]
    for name in feature_cols:
        if name not in col_index:
            raise SchemaError(f"feature column {name!r} not found in {path}")
    if not rows:
        raise ValidationError(f"{path}: no data rows")

    width = len(header)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(
                f"{path}: data row {i + 1} has {len(r)} fields, expected {width}", row=i + 1
            )

    def numeric_column(name, integer=False):
        j = col_index[name]
        out = np.empty(len(rows), dtype=np.float64)
        for i, r in enumerate(rows):
            cell = r[j].strip()
            value = _parse_float(cell) if cell else None
            if value is None or math.isnan(value):
                raise ParseError(
                    f"{path}: cannot parse {cell!r} as a number at data row {i + 1}, column {name!r}",
                    row=i + 1,
                    column=name,
                )
            if integer and value != int(value):
                raise ParseError(
                    f"{path}: event label {cell!r} is not an integer at data row {i + 1}, "
                    f"column {name!r}",
                    row=i + 1,
                    column=name,
                )
            out[i] = value
        return out

    durations = numeric_column(duration_col)
    events = numeric_column(event_col, integer=True)
    bad = np.flatnonzero(durations < 0)
    if bad.size:
        raise ValidationError(
            f"{path}: negative duration {durations[bad[0]]} at data row {bad[0] + 1}"
        )
    bad = np.flatnonzero(events < 0)
    if bad.size:
        raise ValidationError(f"{path}: negative event label at data row {bad[0] + 1}")

    known = {k: list(v) for k, v in (categories or {}).items()}
    categorical = set(categorical_cols) | set(known)
    features = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    out_categories = {}
    for jf, name in enumerate(feature_cols):
        j = col_index[name]
        cells = [r[j].strip() for r in rows]
        parsed = [_parse_float(c) if c else math.nan for c in cells]
        if name not in categorical and all(p is not None for p in parsed):
            features[:, jf] = parsed
            continue
        frozen = name in known
        levels = known.get(name, [])
        codes = {c: i for i, c in enumerate(levels)}
        for i, c in enumerate(cells):
            if not c:
                features[i, jf] = math.nan
                continue
            if c not in codes:
                if frozen:
                    features[i, jf] = math.nan
                    continue
                codes[c] = len(levels)
                levels.append(c)
            features[i, jf] = codes[c]
        out_categories[name] = tuple(levels)

    return Dataset(
        features,
        durations,
        events.astype(np.int64),
        k_events=k_events,
        feature_names=tuple(feature_cols),
        categories=out_categories,
    )


def write_dataset(data: Dataset, path, duration_col="duration", event_col="event"):
    """Write ``data`` as CSV.  Floats use ``repr`` so reloading is bit-exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*data.feature_names, duration_col, event_col])
        cat_cols = [data.categories.get(name) for name in data.feature_names]
        for i in range(data.n_samples):
            row = []
            for j, levels in enumerate(cat_cols):
                v = data.features[i, j]
                if math.isnan(v):
                    row.append("")
                elif levels is not None:
                    row.append(levels[int(v)])
                else:
                    row.append(repr(float(v)))
            row.append(repr(float(data.durations[i])))
            row.append(str(int(data.events[i])))
            writer.writerow(row)


def split(data: Dataset, test_fraction: float = DEFAULT_TEST_FRACTION, seed: int = 0):
    """Random train/test partition; the test split gets ``max(1, floor(n * f))`` rows.

    Rows keep their file order within each split.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be in (0, 1)")
    n = data.n_samples
    n_test = max(1, math.floor(n * test_fraction))
    if n - n_test < 1:
        raise ValidationError(f"cannot split {n} rows with test_fraction={test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.subset(train_idx), data.subset(test_idx)
