"""Kaplan-Meier and Aalen-Johansen estimators on right-censored data.

Ties: at a time where events and censorings coincide, the censored rows are
still counted in the risk set for the events (events first, then censorings).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import ValidationError


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function of time.

    Takes ``value_at_0`` on ``[0, knots[0])`` and ``values[j]`` on
    ``[knots[j], knots[j+1])``; the last value extends to infinity.
    """

    knots: np.ndarray
    values: np.ndarray
    value_at_0: float = 1.0

    def __post_init__(self):
        knots = np.array(self.knots, dtype=np.float64).ravel()
        values = np.array(self.values, dtype=np.float64).ravel()
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "value_at_0", float(self.value_at_0))

    def _lookup(self, t, side):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.knots, t, side=side) - 1
        table = np.concatenate(([self.value_at_0], self.values))
        return table[idx + 1]

    def __call__(self, t):
        return self._lookup(t, "right")

    def left_limit(self, t):
        """Value on the open interval just before ``t``."""
        return self._lookup(t, "left")

    def to_rows(self):
        """(time, value) pairs, starting with the value at time 0."""
        times = np.concatenate(([0.0], self.knots))
        vals = np.concatenate(([self.value_at_0], self.values))
        if self.knots.size and self.knots[0] == 0.0:
            times, vals = times[1:], vals[1:]
        return list(zip(times.tolist(), vals.tolist()))


def _risk_table(durations, indicator):
    """Distinct times with at least one flagged row, their counts and risk sets."""
    durations = np.asarray(durations, dtype=np.float64).ravel()
    indicator = np.asarray(indicator).ravel().astype(bool)
    if durations.size == 0:
        raise ValidationError("cannot fit an estimator on empty input")
    if durations.shape != indicator.shape:
        raise ValidationError("durations and indicator must have equal length")
    if np.any(durations < 0) or not np.all(np.isfinite(durations)):
        raise ValidationError("durations must be finite and nonnegative")
    times, inverse = np.unique(durations, return_inverse=True)
    n_at_time = np.bincount(inverse, minlength=times.size)
    d_at_time = np.bincount(inverse, weights=indicator, minlength=times.size)
    at_risk = durations.size - np.concatenate(([0], np.cumsum(n_at_time)[:-1]))
    return times, inverse, d_at_time, at_risk


def kaplan_meier(durations, indicator) -> StepFunction:
    """Product-limit estimate of P(T > t) where ``indicator`` flags observed events."""
    times, _, d, at_risk = _risk_table(durations, indicator)
    keep = d > 0
    factors = 1.0 - d[keep] / at_risk[keep]
    return StepFunction(times[keep], np.cumprod(factors), 1.0)


def survival_km(data: Dataset) -> StepFunction:
    """KM of the any-event survival function S(t) = P(T* > t)."""
    return kaplan_meier(data.durations, data.events != 0)


def censoring_km(data: Dataset) -> StepFunction:
    """Marginal KM estimate of the censoring survival G(t) = P(C > t)."""
    return kaplan_meier(data.durations, data.events == 0)


def aalen_johansen(data: Dataset) -> list[StepFunction]:
    """Marginal cumulative incidence function of each of the K events.

    F_k(t) = sum over event times t_j <= t of S(t_j-) * d_kj / n_j, with S the
    all-cause KM, so that sum_k F_k + S = 1 at every time.
    """
    k_events = data.k_events
    if k_events < 1:
        raise ValidationError("Aalen-Johansen needs at least one event type (K >= 1)")
    times, inverse, d_any, at_risk = _risk_table(data.durations, data.events != 0)
    keep = d_any > 0
    surv = np.cumprod(1.0 - d_any[keep] / at_risk[keep])
    surv_before = np.concatenate(([1.0], surv[:-1]))
    cifs = []
    for k in range(1, k_events + 1):
        d_k = np.bincount(inverse, weights=data.events == k, minlength=times.size)[keep]
        increments = surv_before * d_k / at_risk[keep]
        cifs.append(StepFunction(times[keep], np.cumsum(increments), 0.0))
    return cifs
