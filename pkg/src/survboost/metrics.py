"""Evaluation metrics for competing-risks predictions.

Predictions are passed as arrays: a CIF matrix has shape ``(n, n_times, K+1)``
with the survival function in slot 0 and the CIF of event k in slot k.
Censoring weights come from any censoring estimator (``g(x, t, left=...)``),
typically the marginal KM of the test split or, for synthetic data, the
true censoring survival.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, TimeGrid
from .exceptions import ValidationError

LOG_CLIP = 1e-15
DEFAULT_QUANTILES = (0.125, 0.25, 0.375, 0.5, 0.625, 0.75)
DEFAULT_NODES = 32


@dataclass
class MetricReport:
    name: str
    value: float
    per_event_values: tuple | None = None
    grid: np.ndarray | None = None
    n_effective: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "value": self.value,
            "per_event_values": None if self.per_event_values is None
            else list(self.per_event_values),
            "grid": None if self.grid is None else np.asarray(self.grid).tolist(),
            "n_effective": self.n_effective,
            "details": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                        for k, v in self.details.items()},
        }


def default_grid(data: Dataset, n_points=100):
    """Evenly spaced horizons on (0, latest observed event time]."""
    event_times = data.durations[data.events != 0]
    if event_times.size == 0:
        raise ValidationError("no observed events to build an evaluation grid")
    return np.linspace(0.0, event_times.max(), n_points + 1)[1:]


def horizon_quantiles(data: Dataset, quantiles=DEFAULT_QUANTILES):
    """Quantiles of the observed (any-event) event times."""
    event_times = data.durations[data.events != 0]
    if event_times.size == 0:
        raise ValidationError("no observed events to place horizons")
    return np.quantile(event_times, quantiles)


def _censoring_weights_at_durations(data, g):
    """1 / Ĝ(t_i- | x_i) for every row."""
    g_t = np.asarray(g(data.features, data.durations, left=True), dtype=np.float64)
    return _safe_inverse(g_t)


def _safe_inverse(g_vals):
    if np.any(g_vals <= 0):
        raise ValidationError("censoring survival estimate is 0 where a weight is needed")
    return 1.0 / g_vals


def brier_score_event(pred, data: Dataset, zeta, g, k, _inv_g_t=None):
    """Censoring-adjusted Brier score of the event-k CIF at horizon ``zeta``.

    Rows censored at or before ``zeta`` contribute zero; the remaining rows are
    weighted by the inverse censoring survival at their event time (events
    before ``zeta``) or at ``zeta`` (rows still at risk).
    """
    if not 1 <= k <= data.k_events:
        raise ValidationError(f"event index {k} outside 1..{data.k_events}")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != (data.n_samples,):
        raise ValidationError("one prediction per row is required")
    t, delta = data.durations, data.events
    before = t <= zeta
    hit = before & (delta == k)
    other = before & (delta != 0) & (delta != k)
    after = ~before
    inv_g_t = _inv_g_t if _inv_g_t is not None else _censoring_weights_at_durations(data, g)
    score = np.zeros(data.n_samples)
    score[hit] = (1.0 - pred[hit]) ** 2 * inv_g_t[hit]
    score[other] = pred[other] ** 2 * inv_g_t[other]
    if after.any():
        g_z = np.asarray(
            g(data.features[after], np.full(after.sum(), float(zeta))), dtype=np.float64
        )
        score[after] = pred[after] ** 2 * _safe_inverse(g_z)
    return float(score.mean())


def brier_curves(cif, data: Dataset, grid, g):
    """BS_k at every grid time; returns an array of shape ``(n_times, K)``."""
    cif = np.asarray(cif, dtype=np.float64)
    grid = TimeGrid(grid).horizons
    if cif.shape != (data.n_samples, grid.size, data.k_events + 1):
        raise ValidationError(
            f"CIF matrix shape {cif.shape} does not match "
            f"({data.n_samples}, {grid.size}, {data.k_events + 1})"
        )
    inv_g_t = _censoring_weights_at_durations(data, g)
    out = np.empty((grid.size, data.k_events))
    for j, zeta in enumerate(grid):
        for k in range(1, data.k_events + 1):
            out[j, k - 1] = brier_score_event(cif[:, j, k], data, zeta, g, k, _inv_g_t=inv_g_t)
    return out


def integrated_brier_score(cif, data: Dataset, grid, g) -> MetricReport:
    """Per-event Brier score averaged over the grid (trapezoidal rule).

    The integral is divided by the grid span, i.e. an expectation over a
    uniformly drawn horizon.  ``value`` is the mean over events.
    """
    grid = TimeGrid(grid).horizons
    if grid.size < 2:
        raise ValidationError("integrated Brier score needs at least two grid times")
    if grid[-1] > data.t_max:
        raise ValidationError(
            f"grid ends at {grid[-1]} beyond the last observed time {data.t_max}"
        )
    curves = brier_curves(cif, data, grid, g)
    span = grid[-1] - grid[0]
    widths = np.diff(grid)[:, None]
    per_event = ((curves[1:] + curves[:-1]) / 2.0 * widths).sum(axis=0) / span
    return MetricReport(
        name="ibs",
        value=float(per_event.mean()),
        per_event_values=tuple(float(v) for v in per_event),
        grid=grid,
        n_effective=data.n_samples,
        details={"brier_by_time": curves},
    )


def accuracy_in_time(cif_at_zeta, data: Dataset, zeta) -> float:
    """Fraction of evaluable rows whose most probable outcome at ``zeta`` is right.

    Rows censored at or before ``zeta`` are dropped.  The target is the event
    observed by ``zeta`` (0 if none).  Ties go to the lowest class index.
    """
    probs = np.asarray(cif_at_zeta, dtype=np.float64)
    if probs.shape != (data.n_samples, data.k_events + 1):
        raise ValidationError("expected one row of K+1 probabilities per sample")
    t, delta = data.durations, data.events
    keep = ~((delta == 0) & (t <= zeta))
    if not keep.any():
        raise ValidationError("no evaluable rows")
    y_true = np.where(t <= zeta, delta, 0)
    y_pred = np.argmax(probs, axis=1)
    return float(np.mean(y_pred[keep] == y_true[keep]))


def s_cen_log_simple(any_event_cif, data: Dataset, t_max, n_nodes=DEFAULT_NODES) -> MetricReport:
    """Censored log score with the CIF interpolated on ``n_nodes`` equal buckets.

    ``any_event_cif`` has shape ``(n, n_nodes + 1)``: 1 - S(t) at the node times
    ``linspace(0, t_max, n_nodes + 1)``.  An event in bucket ``(z_i, z_i+1]``
    scores ``-log(F(z_i+1) - F(z_i))``, a censoring scores ``-log(1 - F(z_i+1))``.
    Increments that are not positive are clamped and counted in
    ``details["n_clamped"]``.
    """
    if n_nodes < 2:
        raise ValidationError("at least two buckets are required")
    f = np.asarray(any_event_cif, dtype=np.float64)
    if f.shape != (data.n_samples, n_nodes + 1):
        raise ValidationError(f"expected shape ({data.n_samples}, {n_nodes + 1})")
    nodes = np.linspace(0.0, t_max, n_nodes + 1)
    t = data.durations
    bucket = np.searchsorted(nodes, t, side="left") - 1
    inside = (bucket >= 0) & (bucket < n_nodes)
    rows = np.flatnonzero(inside)
    b = bucket[rows]
    event = data.events[rows] != 0
    upper = f[rows, b + 1]
    lower = f[rows, b]
    increment = upper - lower
    n_clamped = int(np.sum(event & (increment <= 0)))
    terms = np.where(
        event,
        -np.log(np.maximum(increment, LOG_CLIP)),
        -np.log(np.maximum(1.0 - upper, LOG_CLIP)),
    )
    value = float(terms.sum() / data.n_samples)
    return MetricReport(
        name="s_cen_log_simple",
        value=value,
        grid=nodes,
        n_effective=int(rows.size),
        details={"n_clamped": n_clamped, "n_nodes": n_nodes},
    )


def c_index_at(risk, data: Dataset, zeta, k) -> float:
    """Truncated C-index for event k at horizon ``zeta``.

    A pair (i, j) is comparable when row i had event k at ``t_i <= zeta`` and
    ``t_j > t_i``.  It is concordant when ``risk_i > risk_j``; equal risks
    count one half.
    """
    if zeta <= 0:
        raise ValidationError("zeta must be positive")
    risk = np.asarray(risk, dtype=np.float64)
    t, delta = data.durations, data.events
    ranks = np.unique(risk, return_inverse=True)[1] + 1
    size = int(ranks.max()) + 1
    tree = np.zeros(size + 1, dtype=np.int64)

    def add(pos):
        while pos <= size:
            tree[pos] += 1
            pos += pos & -pos

    def prefix(pos):
        s = 0
        while pos > 0:
            s += tree[pos]
            pos -= pos & -pos
        return int(s)

    order = np.argsort(-t, kind="stable")
    concordant = 0.0
    pairs = 0
    inserted = 0
    start = 0
    n = order.size
    while start < n:
        stop = start
        while stop < n and t[order[stop]] == t[order[start]]:
            stop += 1
        group = order[start:stop]
        for i in group:
            if delta[i] == k and t[i] <= zeta:
                less = prefix(ranks[i] - 1)
                equal = prefix(ranks[i]) - less
                concordant += less + 0.5 * equal
                pairs += inserted
        for i in group:
            add(ranks[i])
        inserted += group.size
        start = stop
    if pairs == 0:
        raise ValidationError("no comparable pairs")
    return concordant / pairs
