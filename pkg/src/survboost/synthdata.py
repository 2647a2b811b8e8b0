"""Synthetic competing-risks data with Weibull event and censoring times.

Each row gets Gaussian features ``x``.  A fixed random linear map (drawn from
the seed) turns ``x`` into a Weibull shape and scale for every event and for
the censoring time, through a softplus link.  The observed outcome is the
earliest of the K latent event times and the censoring time.

Because the generating process is known, the true CIFs, survival function and
censoring survival can be evaluated for any ``x`` (see :class:`SynthOracle`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import Dataset

CENSORING_MODES = ("independent", "covariate_dependent")
SHAPE_FLOOR = 0.5
SCALE_FLOOR = 0.05
QUAD_TOL = 1e-8
CALIBRATION_TOL = 0.005
MAX_BISECTION_STEPS = 100


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 20000
    n_events: int = 2
    n_features: int = 6
    censoring_mode: str = "covariate_dependent"
    target_censoring_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.n_features < 2 * self.n_events:
            raise ValueError("n_features must be at least 2 * n_events")
        if self.censoring_mode not in CENSORING_MODES:
            raise ValueError(f"censoring_mode must be one of {CENSORING_MODES}")
        if not 0.0 < self.target_censoring_rate < 1.0:
            raise ValueError("target_censoring_rate must be in (0, 1)")


def _softplus(z):
    return np.logaddexp(0.0, z)


@njit(cache=True)
def _integrand(u, coefs, powers):
    s = u
    for j in range(coefs.shape[0]):
        s += coefs[j] * u ** powers[j]
    return math.exp(-s)


@njit(cache=True)
def _adaptive_simpson(coefs, powers, a, b, tol):
    if b <= a:
        return 0.0
    max_depth = 60
    st_a = np.empty(max_depth + 2)
    st_b = np.empty(max_depth + 2)
    st_fa = np.empty(max_depth + 2)
    st_fm = np.empty(max_depth + 2)
    st_fb = np.empty(max_depth + 2)
    st_whole = np.empty(max_depth + 2)
    st_tol = np.empty(max_depth + 2)
    st_depth = np.empty(max_depth + 2, dtype=np.int64)
    fa = _integrand(a, coefs, powers)
    fb = _integrand(b, coefs, powers)
    fm = _integrand(0.5 * (a + b), coefs, powers)
    top = 0
    st_a[0] = a
    st_b[0] = b
    st_fa[0] = fa
    st_fm[0] = fm
    st_fb[0] = fb
    st_whole[0] = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    st_tol[0] = tol
    st_depth[0] = 0
    total = 0.0
    while top >= 0:
        a = st_a[top]
        b = st_b[top]
        fa = st_fa[top]
        fm = st_fm[top]
        fb = st_fb[top]
        whole = st_whole[top]
        eps = st_tol[top]
        depth = st_depth[top]
        top -= 1
        m = 0.5 * (a + b)
        flm = _integrand(0.5 * (a + m), coefs, powers)
        frm = _integrand(0.5 * (m + b), coefs, powers)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
            continue
        top += 1
        st_a[top] = m
        st_b[top] = b
        st_fa[top] = fm
        st_fm[top] = frm
        st_fb[top] = fb
        st_whole[top] = right
        st_tol[top] = 0.5 * eps
        st_depth[top] = depth + 1
        top += 1
        st_a[top] = a
        st_b[top] = m
        st_fa[top] = fa
        st_fm[top] = flm
        st_fb[top] = fm
        st_whole[top] = left
        st_tol[top] = 0.5 * eps
        st_depth[top] = depth + 1
    return total


@njit(cache=True)
def _cif_rows(shapes, scales, k, grid, tol):
    """CIF of event ``k`` for each row on an increasing grid.

    Substituting u = (t / scale_k) ** shape_k turns f_k(t) dt into exp(-u) du,
    which leaves a bounded integrand even when shape_k < 1.
    """
    n, n_events = shapes.shape
    out = np.zeros((n, grid.shape[0]))
    coefs = np.empty(n_events - 1)
    powers = np.empty(n_events - 1)
    for i in range(n):
        a_k = shapes[i, k]
        l_k = scales[i, k]
        pos = 0
        for j in range(n_events):
            if j == k:
                continue
            coefs[pos] = (l_k / scales[i, j]) ** shapes[i, j]
            powers[pos] = shapes[i, j] / a_k
            pos += 1
        acc = 0.0
        u_prev = 0.0
        for g in range(grid.shape[0]):
            u = (grid[g] / l_k) ** a_k if grid[g] > 0 else 0.0
            acc += _adaptive_simpson(coefs, powers, u_prev, u, tol)
            u_prev = u
            out[i, g] = acc
    return out


@dataclass(frozen=True)
class SynthOracle:
    """True distributions of a synthetic draw, evaluable at any covariates.

    ``coef`` has shape ``(n_features, 2 * n_events + 2)``: columns ``2k`` and
    ``2k + 1`` drive the shape and scale of event ``k + 1``; the last two drive
    censoring (ignored when censoring is independent of ``x``).
    """

    coef: np.ndarray
    intercept: np.ndarray
    n_events: int
    censoring_mode: str
    censoring_multiplier: float

    def event_params(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        lin = x @ self.coef[:, : 2 * self.n_events] + self.intercept[: 2 * self.n_events]
        shapes = SHAPE_FLOOR + _softplus(lin[:, 0::2])
        scales = SCALE_FLOOR + _softplus(lin[:, 1::2])
        return shapes, scales

    def censoring_params(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        lin = np.tile(self.intercept[-2:], (x.shape[0], 1))
        if self.censoring_mode == "covariate_dependent":
            lin = lin + x @ self.coef[:, -2:]
        shape = SHAPE_FLOOR + _softplus(lin[:, 0])
        scale = (SCALE_FLOOR + _softplus(lin[:, 1])) * self.censoring_multiplier
        return shape, scale

    def survival(self, x, zeta):
        """S*(zeta | x) = prod_j exp(-(zeta / scale_j) ** shape_j)."""
        shapes, scales = self.event_params(x)
        zeta = np.asarray(zeta, dtype=np.float64)
        zeta = zeta.reshape(-1, 1) if zeta.ndim else zeta
        return np.exp(-np.sum((zeta / scales) ** shapes, axis=1))

    def censoring_survival(self, x, zeta):
        """G*(zeta | x) = P(C > zeta | x)."""
        shape, scale = self.censoring_params(x)
        return np.exp(-((np.asarray(zeta, dtype=np.float64) / scale) ** shape))

    def cif(self, x, grid, k):
        """F*_k on ``grid`` for every row of ``x``; shape ``(n, len(grid))``."""
        if not 1 <= k <= self.n_events:
            raise ValueError(f"event index {k} outside 1..{self.n_events}")
        grid = np.asarray(grid, dtype=np.float64).ravel()
        if np.any(np.diff(grid) < 0) or np.any(grid < 0):
            raise ValueError("grid must be nonnegative and nondecreasing")
        shapes, scales = self.event_params(x)
        return _cif_rows(shapes, scales, k - 1, grid, QUAD_TOL)

    def cif_matrix(self, x, grid):
        """``(n, len(grid), K + 1)`` array: survival in slot 0, CIFs after."""
        grid = np.asarray(grid, dtype=np.float64).ravel()
        n = np.atleast_2d(x).shape[0]
        out = np.empty((n, grid.size, self.n_events + 1))
        shapes, scales = self.event_params(x)
        log_s = -np.sum((grid[None, :, None] / scales[:, None, :]) ** shapes[:, None, :], axis=2)
        out[:, :, 0] = np.exp(log_s)
        for k in range(1, self.n_events + 1):
            out[:, :, k] = _cif_rows(shapes, scales, k - 1, grid, QUAD_TOL)
        return out

    def censoring_estimator(self):
        return OracleCensoring(self)

    def to_dict(self):
        return {
            "kind": "synth_oracle",
            "coef": self.coef.tolist(),
            "intercept": self.intercept.tolist(),
            "n_events": self.n_events,
            "censoring_mode": self.censoring_mode,
            "censoring_multiplier": self.censoring_multiplier,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "synth_oracle":
            raise ValueError("not a synthetic oracle sidecar")
        return cls(
            coef=np.asarray(d["coef"], dtype=np.float64),
            intercept=np.asarray(d["intercept"], dtype=np.float64),
            n_events=int(d["n_events"]),
            censoring_mode=d["censoring_mode"],
            censoring_multiplier=float(d["censoring_multiplier"]),
        )


class OracleCensoring:
    """G* as a censoring estimator (continuous, so left limits equal values)."""

    def __init__(self, oracle: SynthOracle):
        self.oracle = oracle

    def __call__(self, features, times, left=False):
        return self.oracle.censoring_survival(features, times)


def oracle_cif(oracle: SynthOracle, x, zeta, k):
    """F*_k(zeta | x) for a single covariate vector; ``k = 0`` gives S*."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    if k == 0:
        return float(oracle.survival(x, np.array([zeta]))[0])
    return float(oracle.cif(x, np.array([zeta]), k)[0, 0])


@dataclass(frozen=True)
class SynthDraw:
    data: Dataset
    oracle: SynthOracle
    event_times: np.ndarray  # (n, K) latent times
    censoring_times: np.ndarray


def _weibull(rng_uniform, shape, scale):
    return scale * (-np.log(rng_uniform)) ** (1.0 / shape)


def draw(config: SynthConfig) -> SynthDraw:
    """Generate a dataset together with its latent times and oracle."""
    rng = np.random.default_rng(config.seed)
    d, k_events = config.n_features, config.n_events
    coef = rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, 2 * k_events + 2))
    intercept = rng.normal(0.0, 0.5, size=2 * k_events + 2)
    features = rng.normal(size=(config.n_samples, d))
    u_events = rng.uniform(size=(config.n_samples, k_events))
    u_cens = rng.uniform(size=config.n_samples)

    oracle = SynthOracle(coef, intercept, k_events, config.censoring_mode, 1.0)
    shapes, scales = oracle.event_params(features)
    event_times = _weibull(u_events, shapes, scales)
    t_star = event_times.min(axis=1)
    c_shape, c_scale = oracle.censoring_params(features)
    base_cens = _weibull(u_cens, c_shape, c_scale)

    target = config.target_censoring_rate
    lo, hi = -30.0, 30.0  # log of the censoring scale multiplier
    log_m = 0.0
    rate = float(np.mean(base_cens < t_star))
    for _ in range(MAX_BISECTION_STEPS):
        log_m = 0.5 * (lo + hi)
        rate = float(np.mean(math.exp(log_m) * base_cens < t_star))
        if abs(rate - target) <= CALIBRATION_TOL:
            break
        if rate > target:
            lo = log_m
        else:
            hi = log_m
    if abs(rate - target) > 0.03:
        raise CalibrationError(
            f"censoring calibration failed: achieved rate {rate:.4f}, target {target:.4f}"
        )
    multiplier = math.exp(log_m)
    oracle = SynthOracle(coef, intercept, k_events, config.censoring_mode, multiplier)
    censoring_times = multiplier * base_cens

    censored = censoring_times < t_star
    durations = np.where(censored, censoring_times, t_star)
    events = np.where(censored, 0, event_times.argmin(axis=1) + 1)
    data = Dataset(features, durations, events, k_events=k_events)
    return SynthDraw(data, oracle, event_times, censoring_times)


def generate(config: SynthConfig):
    """Return ``(dataset, oracle)`` for ``config``."""
    out = draw(config)
    return out.data, out.oracle
