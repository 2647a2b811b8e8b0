"""SurvivalBoost: gradient-boosted competing-risks model with time as a feature.

Every boosting round draws a fresh horizon ``zeta ~ U(0, t_max)`` for each
training row (optionally several per row), appends it to the covariates, turns
the outcome into a (K+1)-class target with IPCW weights, and fits one softmax
boosting stage.  Class 0 is "no event by zeta" (survival), class k is
"event k first, by zeta" (the k-th CIF).

The censoring weights start from the marginal Kaplan-Meier estimate of the
censoring survival and are then refined by a second, binary boosted model
("censored by zeta or not") whose own weights come from the event model's
survival estimate.  The two models are trained in alternation.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, TimeGrid
from .exceptions import ModelFormatError, ModelVersionError, ValidationError
from .gbt import GbtConfig, bin_features, boost_round, init_ensemble, uniform_edges
from .gbt.ensemble import Ensemble
from .gbt.loss import softmax, weighted_log_loss
from .ipcw import DEFAULT_CLIP, MarginalCensoring, ipcw_batch
from .nonparametric import StepFunction, aalen_johansen, censoring_km, kaplan_meier, survival_km

logger = logging.getLogger(__name__)

FORMAT_NAME = "survboost-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SurvivalBoostConfig:
    gbt: GbtConfig = field(default_factory=GbtConfig)
    censoring_gbt: GbtConfig = field(default_factory=GbtConfig)
    n_horizons_per_row: int = 1
    feedback_period: int = 1
    ipcw_clip: float = DEFAULT_CLIP
    censoring_model: str = "boosted"  # or "km" to keep the marginal weights
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.gbt, dict):
            object.__setattr__(self, "gbt", GbtConfig(**self.gbt))
        if isinstance(self.censoring_gbt, dict):
            object.__setattr__(self, "censoring_gbt", GbtConfig(**self.censoring_gbt))
        if self.n_horizons_per_row < 1:
            raise ValueError("n_horizons_per_row must be >= 1")
        if self.feedback_period < 1:
            raise ValueError("feedback_period must be >= 1")
        if not 0.0 < self.ipcw_clip < 0.5:
            raise ValueError("ipcw_clip must be in (0, 0.5)")
        if self.censoring_model not in ("boosted", "km"):
            raise ValueError("censoring_model must be 'boosted' or 'km'")

    def to_dict(self):
        return asdict(self)


def _augment(binned_x, time_col, mapper):
    """Binned ``(x, zeta)`` matrix; the time feature is the last column."""
    out = np.empty((binned_x.shape[0], binned_x.shape[1] + 1), dtype=binned_x.dtype, order="F")
    out[:, :-1] = binned_x
    out[:, -1] = mapper.transform_column(time_col, mapper.n_features - 1)
    return out


class _EnsembleSurvival:
    """Callable mapping (binned x, times) to one class probability of an ensemble."""

    def __init__(self, ensemble, klass):
        self.ensemble = ensemble
        self.klass = klass

    def __call__(self, binned_x, times, left=False):
        aug = _augment(binned_x, times, self.ensemble.bin_mapper)
        return softmax(self.ensemble.predict_raw_binned(aug))[:, self.klass]


class BoostedCensoring:
    """Censoring survival G(t | x) read off a fitted censoring ensemble.

    Values are clipped below at ``eps``, the same floor the training weights use.
    """

    def __init__(self, ensemble: Ensemble, n_features: int, eps=DEFAULT_CLIP):
        self.ensemble = ensemble
        self.n_features = n_features
        self.eps = eps

    def __call__(self, features, times, left=False):
        features = np.asarray(features, dtype=np.float64).reshape(-1, self.n_features)
        times = np.broadcast_to(np.asarray(times, dtype=np.float64), (features.shape[0],))
        aug = np.column_stack([features, times])
        return np.maximum(softmax(self.ensemble.predict_raw(aug))[:, 0], self.eps)


@dataclass(frozen=True)
class SurvivalModel:
    event_ensemble: Ensemble
    censoring_ensemble: Ensemble | None
    km_censoring: StepFunction
    t_max: float
    k_events: int
    feature_names: tuple
    categories: dict
    config: SurvivalBoostConfig

    kind = "survivalboost"

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check_features(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        if features.shape[1] != self.n_features:
            raise ValidationError(
                f"model expects {self.n_features} features, got {features.shape[1]}"
            )
        return features

    def predict_proba_at(self, features, horizons):
        """(n, K+1) probabilities with a per-row horizon."""
        features = self._check_features(features)
        horizons = np.broadcast_to(np.asarray(horizons, dtype=np.float64), (features.shape[0],))
        return self.event_ensemble.predict_proba(np.column_stack([features, horizons]))

    def predict_cif(self, features, grid, monotone=False):
        """CifMatrix of shape ``(n, len(grid), K + 1)``.

        ``[:, j, 0]`` is the survival function at ``grid[j]``, ``[:, j, k]`` the
        CIF of event k.  With ``monotone=True`` each CIF is replaced by its
        running maximum along the grid and the survival by the remainder.
        """
        features = self._check_features(features)
        grid = TimeGrid(grid).horizons
        mapper = self.event_ensemble.bin_mapper
        binned_x = mapper.transform(np.column_stack([features, np.zeros(features.shape[0])]))
        out = np.empty((features.shape[0], grid.size, self.k_events + 1))
        for j, zeta in enumerate(grid):
            binned_x[:, -1] = mapper.transform_column(np.array([zeta]), mapper.n_features - 1)[0]
            out[:, j, :] = softmax(self.event_ensemble.predict_raw_binned(binned_x))
        if monotone:
            out = _monotone_cif(out)
        return out

    def censoring_survival(self, features, times):
        """Ĝ(t | x) from the censoring model, or the marginal KM if none was fitted.

        The boosted estimate is floored at ``config.ipcw_clip``.
        """
        features = self._check_features(features)
        if self.censoring_ensemble is None:
            return self.km_censoring(np.broadcast_to(times, (features.shape[0],)))
        return BoostedCensoring(self.censoring_ensemble, self.n_features,
                                self.config.ipcw_clip)(features, times)

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "k_events": self.k_events,
            "t_max": self.t_max,
            "feature_names": list(self.feature_names),
            "categories": {k: list(v) for k, v in self.categories.items()},
            "config": self.config.to_dict(),
            "km_censoring": _step_to_dict(self.km_censoring),
            "event_ensemble": self.event_ensemble.to_dict(),
            "censoring_ensemble": (
                None if self.censoring_ensemble is None else self.censoring_ensemble.to_dict()
            ),
        }

    @classmethod
    def from_dict(cls, d):
        cens = d["censoring_ensemble"]
        return cls(
            event_ensemble=Ensemble.from_dict(d["event_ensemble"]),
            censoring_ensemble=None if cens is None else Ensemble.from_dict(cens),
            km_censoring=_step_from_dict(d["km_censoring"]),
            t_max=float(d["t_max"]),
            k_events=int(d["k_events"]),
            feature_names=tuple(d["feature_names"]),
            categories={k: tuple(v) for k, v in d["categories"].items()},
            config=SurvivalBoostConfig(**d["config"]),
        )


def _monotone_cif(cif):
    """Running maximum of each CIF along the grid, survival as the remainder.

    When the running maxima would sum past one, only the increments of that
    step are shrunk, so the CIFs stay nondecreasing.
    """
    out = cif.copy()
    prev = np.zeros((cif.shape[0], cif.shape[2] - 1))
    for j in range(cif.shape[1]):
        cur = np.maximum(prev, cif[:, j, 1:])
        step = cur - prev
        room = 1.0 - prev.sum(axis=1)
        total = step.sum(axis=1)
        over = total > room
        step[over] *= (np.maximum(room[over], 0.0) / total[over])[:, None]
        prev = prev + step
        out[:, j, 1:] = prev
        out[:, j, 0] = np.clip(1.0 - prev.sum(axis=1), 0.0, 1.0)
    return out


class SurvivalBoostTrainer:
    """Training state for one fit; :func:`fit` drives it round by round."""

    def __init__(self, data: Dataset, config: SurvivalBoostConfig):
        data.require_events()
        self.data = data
        self.config = config
        self.t_max = data.t_max
        if self.t_max <= 0:
            raise ValidationError("all durations are zero; cannot sample horizons")
        self.k_events = data.k_events
        self.rng = np.random.default_rng(config.seed)
        self.km_censoring = censoring_km(data)

        r = config.n_horizons_per_row
        self.rows = np.tile(np.arange(data.n_samples), r)
        self.durations = data.durations[self.rows]
        self.events = data.events[self.rows]

        self.event_mapper, self.event_binned_x = self._binned(config.gbt.max_bins)
        if config.censoring_gbt.max_bins == config.gbt.max_bins:
            self.cens_mapper, self.cens_binned_x = self.event_mapper, self.event_binned_x
        else:
            self.cens_mapper, self.cens_binned_x = self._binned(config.censoring_gbt.max_bins)

        self.event_ensemble = None
        self.censoring_ensemble = None
        self.rounds = 0
        self.history = []

    def _binned(self, max_bins):
        binned, mapper = bin_features(self.data.features, max_bins)
        mapper = mapper.append(uniform_edges(self.t_max, max_bins))
        return mapper, np.asfortranarray(binned[self.rows])

    @property
    def n_augmented_rows(self) -> int:
        return self.rows.size

    def _censoring_estimator(self):
        if self.censoring_ensemble is None:
            return MarginalCensoring(self.km_censoring)
        return _EnsembleSurvival(self.censoring_ensemble, 0)

    def _sample_horizons(self):
        return self.rng.uniform(0.0, self.t_max, size=self.rows.size)

    def event_round(self):
        """Sample horizons, compute IPCW targets, fit one stage of the event model."""
        start = time.perf_counter()
        zeta = self._sample_horizons()
        y, w = ipcw_batch(self.durations, self.events, zeta, self.cens_binned_x,
                          self._censoring_estimator(), eps=self.config.ipcw_clip)
        aug = _augment(self.event_binned_x, zeta, self.event_mapper)
        if self.event_ensemble is None:
            self.event_ensemble = init_ensemble(
                self.config.gbt, self.k_events + 1, self.event_mapper, y, w
            )
        raw = self.event_ensemble.predict_raw_binned(aug)
        loss = weighted_log_loss(softmax(raw), y, w)
        self.event_ensemble = boost_round(self.event_ensemble, aug, y, w, raw=raw)
        self.rounds += 1
        record = {"round": self.rounds, "event_loss": loss,
                  "seconds": time.perf_counter() - start}
        self.history.append(record)
        return record

    def censoring_feedback_round(self):
        """One boosting stage of the binary censoring model.

        Roles are swapped: censoring is the "event" (class 1 = censored by
        zeta) and the event model's survival estimate provides the weights.
        """
        if self.event_ensemble is None or self.event_ensemble.n_stages == 0:
            raise RuntimeError("the event model needs at least one stage first")
        start = time.perf_counter()
        zeta = self._sample_horizons()
        censored = (self.events == 0).astype(np.int64)
        surv = _EnsembleSurvival(self.event_ensemble, 0)
        y, w = ipcw_batch(self.durations, censored, zeta, self.event_binned_x, surv,
                          eps=self.config.ipcw_clip)
        aug = _augment(self.cens_binned_x, zeta, self.cens_mapper)
        if self.censoring_ensemble is None:
            self.censoring_ensemble = init_ensemble(
                self.config.censoring_gbt, 2, self.cens_mapper, y, w
            )
        raw = self.censoring_ensemble.predict_raw_binned(aug)
        loss = weighted_log_loss(softmax(raw), y, w)
        self.censoring_ensemble = boost_round(self.censoring_ensemble, aug, y, w, raw=raw)
        if self.history:
            self.history[-1]["censoring_loss"] = loss
            self.history[-1]["seconds"] += time.perf_counter() - start
        return self.censoring_ensemble

    def model(self) -> SurvivalModel:
        return SurvivalModel(
            event_ensemble=self.event_ensemble,
            censoring_ensemble=self.censoring_ensemble,
            km_censoring=self.km_censoring,
            t_max=self.t_max,
            k_events=self.k_events,
            feature_names=tuple(self.data.feature_names),
            categories=dict(self.data.categories),
            config=self.config,
        )


def censoring_feedback_round(state: SurvivalBoostTrainer):
    return state.censoring_feedback_round()


def fit(data: Dataset, config: SurvivalBoostConfig | None = None, callback=None) -> SurvivalModel:
    """Train SurvivalBoost on ``data``.

    ``callback(record)`` is called after every round with the round number,
    the weighted training loss of the event model before the update, and the
    wall time of the round.
    """
    config = config or SurvivalBoostConfig()
    trainer = SurvivalBoostTrainer(data, config)
    for m in range(1, config.gbt.n_iterations + 1):
        trainer.event_round()
        if config.censoring_model == "boosted" and m % config.feedback_period == 0:
            trainer.censoring_feedback_round()
        record = trainer.history[-1]
        logger.debug("round %d: %s", m, record)
        if callback is not None:
            callback(record)
    if trainer.event_ensemble is None:
        # zero iterations: base scores from one draw of targets
        zeta = trainer._sample_horizons()
        y, w = ipcw_batch(trainer.durations, trainer.events, zeta, None,
                          MarginalCensoring(trainer.km_censoring), eps=config.ipcw_clip)
        trainer.event_ensemble = init_ensemble(config.gbt, data.k_events + 1,
                                               trainer.event_mapper, y, w)
    return trainer.model()


def predict_cif(model, features, grid, monotone=False):
    return model.predict_cif(features, grid, monotone=monotone)


# -- marginal baselines -------------------------------------------------------


@dataclass(frozen=True)
class MarginalModel:
    """Covariate-free CIF predictor (Aalen-Johansen or Kaplan-Meier).

    ``kind == "aalen_johansen"``: slot 0 is the all-cause KM survival and slot k
    the AJ CIF of event k, so rows sum to one.  ``kind == "kaplan_meier"``:
    slot k is one minus the KM of event k with the other events treated as
    censored, the naive single-event approach.
    """

    kind: str
    survival: StepFunction
    cifs: tuple
    t_max: float
    k_events: int
    n_features: int | None = None

    def predict_cif(self, features, grid, monotone=False):
        grid = TimeGrid(grid).horizons
        n = np.asarray(features).shape[0]
        if self.n_features is not None and np.asarray(features).shape[1] != self.n_features:
            raise ValidationError(
                f"model expects {self.n_features} features, got {np.asarray(features).shape[1]}"
            )
        row = np.empty((grid.size, self.k_events + 1))
        row[:, 0] = self.survival(grid)
        for k, f in enumerate(self.cifs, start=1):
            row[:, k] = f(grid)
        return np.broadcast_to(row, (n, grid.size, self.k_events + 1)).copy()

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "k_events": self.k_events,
            "t_max": self.t_max,
            "n_features": self.n_features,
            "survival": _step_to_dict(self.survival),
            "cifs": [_step_to_dict(f) for f in self.cifs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            survival=_step_from_dict(d["survival"]),
            cifs=tuple(_step_from_dict(f) for f in d["cifs"]),
            t_max=float(d["t_max"]),
            k_events=int(d["k_events"]),
            n_features=d.get("n_features"),
        )


def fit_aalen_johansen(data: Dataset) -> MarginalModel:
    return MarginalModel("aalen_johansen", survival_km(data), tuple(aalen_johansen(data)),
                         data.t_max, data.k_events, data.n_features)


def fit_kaplan_meier(data: Dataset) -> MarginalModel:
    cifs = []
    for k in range(1, data.k_events + 1):
        km_k = kaplan_meier(data.durations, data.events == k)
        cifs.append(StepFunction(km_k.knots, 1.0 - km_k.values, 0.0))
    return MarginalModel("kaplan_meier", survival_km(data), tuple(cifs),
                         data.t_max, data.k_events, data.n_features)


# -- model files --------------------------------------------------------------


def _step_to_dict(step: StepFunction):
    return {"knots": step.knots.tolist(), "values": step.values.tolist(),
            "value_at_0": step.value_at_0}


def _step_from_dict(d):
    return StepFunction(d["knots"], d["values"], d["value_at_0"])


def _dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model, path):
    """Write a model as JSON text.  Floats round-trip exactly."""
    Path(path).write_text(_dumps(model.to_dict()), encoding="utf-8")


def _read_payload(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path}: not a {FORMAT_NAME} file")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(version, FORMAT_VERSION)
    return payload


def load_model(path) -> SurvivalModel:
    """Load a SurvivalBoost model saved by :func:`save_model`."""
    payload = _read_payload(path)
    if payload.get("kind") != SurvivalModel.kind:
        raise ModelFormatError(
            f"{path}: model kind {payload.get('kind')!r} is not a SurvivalBoost model"
        )
    try:
        return SurvivalModel.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from None


def load_any_model(path):
    """Load a SurvivalBoost model or a marginal baseline."""
    payload = _read_payload(path)
    kind = payload.get("kind")
    try:
        if kind == SurvivalModel.kind:
            return SurvivalModel.from_dict(payload)
        if kind in ("aalen_johansen", "kaplan_meier"):
            return MarginalModel.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from None
    raise ModelFormatError(f"{path}: unknown model kind {kind!r}")
