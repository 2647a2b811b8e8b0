"""Multiclass targets and inverse-probability-of-censoring weights.

For a row observed at ``(t, delta)`` and a horizon ``zeta``:

* ``t > zeta``: the row survived the horizon, target 0, weight ``1 / G(zeta | x)``;
* ``t <= zeta`` with an event: target ``delta``, weight ``1 / G(t- | x)``;
* ``t <= zeta`` censored: the outcome at ``zeta`` is unknown, target 0, weight 0.

``G`` is clipped below at ``eps`` so weights never exceed ``1 / eps``.
"""
from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from .nonparametric import StepFunction

DEFAULT_CLIP = 0.02


class CensoringEstimator(Protocol):
    def __call__(self, features: np.ndarray, times: np.ndarray, left: bool = False) -> np.ndarray:
        """P(C > t | x) for each row; ``left`` asks for the limit from below."""


class MarginalCensoring:
    """Covariate-free censoring survival backed by a step function (e.g. KM)."""

    def __init__(self, step: StepFunction):
        self.step = step

    def __call__(self, features, times, left=False):
        times = np.asarray(times, dtype=np.float64)
        return self.step.left_limit(times) if left else self.step(times)


class ConstantCensoring:
    def __init__(self, value=1.0):
        self.value = float(value)

    def __call__(self, features, times, left=False):
        return np.full(np.shape(times), self.value)


def ipcw_target(t, delta, zeta, x, g, eps=DEFAULT_CLIP):
    """Target class and weight for a single (row, horizon) pair."""
    if math.isnan(t) or math.isnan(zeta):
        raise ValueError("t and zeta must not be NaN")
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if t > zeta:
        g_val = float(g(x, np.array([zeta]))[0])
        return 0, 1.0 / max(g_val, eps)
    if delta != 0:
        g_val = float(g(x, np.array([t]), left=True)[0])
        return int(delta), 1.0 / max(g_val, eps)
    return 0, 0.0


def ipcw_batch(durations, events, horizons, features, g, eps=DEFAULT_CLIP):
    """Vectorized :func:`ipcw_target`; returns ``(y, w)`` arrays."""
    durations = np.asarray(durations, dtype=np.float64)
    events = np.asarray(events)
    horizons = np.asarray(horizons, dtype=np.float64)
    if not (durations.shape == events.shape == horizons.shape):
        raise ValueError(
            f"length mismatch: {durations.shape[0]} durations, {events.shape[0]} events, "
            f"{horizons.shape[0]} horizons"
        )
    if features is not None and np.shape(features)[0] != durations.shape[0]:
        raise ValueError("features and durations have different row counts")
    if np.isnan(durations).any() or np.isnan(horizons).any():
        raise ValueError("durations and horizons must not contain NaN")
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")

    survived = durations > horizons
    had_event = ~survived & (events != 0)
    y = np.where(had_event, events, 0).astype(np.int64)
    w = np.zeros(durations.shape[0], dtype=np.float64)
    if survived.any():
        x_s = None if features is None else features[survived]
        w[survived] = 1.0 / np.maximum(g(x_s, horizons[survived]), eps)
    if had_event.any():
        x_e = None if features is None else features[had_event]
        w[had_event] = 1.0 / np.maximum(g(x_e, durations[had_event], left=True), eps)
    return y, w
