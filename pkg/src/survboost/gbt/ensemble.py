"""Staged softmax ensemble: one tree per class per boosting round."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from numba import njit, prange

from .binning import BinMapper
from .loss import PROBA_CLIP, softmax, softmax_grad_hess, weighted_class_frequencies
from .tree import Tree, grow_tree


@dataclass(frozen=True)
class GbtConfig:
    learning_rate: float = 0.1
    n_iterations: int = 100
    max_depth: int = 4
    max_bins: int = 255
    min_child_weight: float = 1e-3
    l2_regularization: float = 1.0
    min_samples_leaf: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in [0, 1]")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 2 <= self.max_bins <= 255:
            raise ValueError("max_bins must be in [2, 255]")
        if self.min_child_weight < 0 or self.l2_regularization < 0:
            raise ValueError("min_child_weight and l2_regularization must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def to_dict(self):
        return asdict(self)


@njit(parallel=True, cache=True)
def _accumulate(binned, feature, bin_thr, missing_left, left, right, value, roots,
                tree_class, missing_bin, lr, raw):
    for i in prange(binned.shape[0]):
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                b = binned[i, feature[node]]
                if b == missing_bin:
                    go_left = missing_left[node]
                else:
                    go_left = b <= bin_thr[node]
                node = left[node] if go_left else right[node]
            raw[i, tree_class[t]] += lr * value[node]
    return raw


@dataclass(frozen=True)
class Ensemble:
    """Additive softmax model ``raw = base_scores + lr * sum_m tree[m][c](x)``.

    ``stages[m][c]`` is the tree of round ``m`` for class ``c``.
    """

    config: GbtConfig
    n_classes: int
    base_scores: np.ndarray
    bin_mapper: BinMapper
    stages: tuple = field(default=())

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @cached_property
    def _packed(self):
        feature, bin_thr, miss, left, right, value, roots, tree_class = ([] for _ in range(8))
        offset = 0
        for stage in self.stages:
            for c, tree in enumerate(stage):
                feature.append(tree.feature)
                bin_thr.append(tree.bin_threshold)
                miss.append(tree.missing_left)
                left.append(tree.left + offset)
                right.append(tree.right + offset)
                value.append(tree.value)
                roots.append(offset)
                tree_class.append(c)
                offset += tree.n_nodes
        if not roots:
            empty_i = np.zeros(0, dtype=np.int32)
            return (empty_i, empty_i, np.zeros(0, dtype=np.bool_), empty_i, empty_i,
                    np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        return (
            np.concatenate(feature).astype(np.int32),
            np.concatenate(bin_thr).astype(np.int32),
            np.concatenate(miss).astype(np.bool_),
            np.concatenate(left).astype(np.int32),
            np.concatenate(right).astype(np.int32),
            np.concatenate(value).astype(np.float64),
            np.asarray(roots, dtype=np.int64),
            np.asarray(tree_class, dtype=np.int64),
        )

    def predict_raw_binned(self, binned) -> np.ndarray:
        raw = np.tile(self.base_scores, (binned.shape[0], 1))
        if self.stages:
            _accumulate(binned, *self._packed, self.bin_mapper.missing_bin,
                        float(self.learning_rate), raw)
        return raw

    def predict_raw(self, features) -> np.ndarray:
        return self.predict_raw_binned(self.bin_mapper.transform(features))

    def predict_proba(self, features) -> np.ndarray:
        return softmax(self.predict_raw(features))

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "base_scores": self.base_scores.tolist(),
            "bin_edges": [e.tolist() for e in self.bin_mapper.edges],
            "max_bins": self.bin_mapper.max_bins,
            "stages": [[t.to_dict() for t in stage] for stage in self.stages],
        }

    @classmethod
    def from_dict(cls, d):
        mapper = BinMapper(
            tuple(np.asarray(e, dtype=np.float64) for e in d["bin_edges"]), int(d["max_bins"])
        )
        return cls(
            config=GbtConfig(**d["config"]),
            n_classes=int(d["n_classes"]),
            base_scores=np.asarray(d["base_scores"], dtype=np.float64),
            bin_mapper=mapper,
            stages=tuple(tuple(Tree.from_dict(t) for t in stage) for stage in d["stages"]),
        )


def predict_proba(ensemble: Ensemble, features) -> np.ndarray:
    """Class probabilities, shape ``(n, n_classes)``; rows sum to one."""
    return ensemble.predict_proba(features)


def init_ensemble(config: GbtConfig, n_classes: int, bin_mapper: BinMapper, y, w) -> Ensemble:
    """Empty ensemble whose softmax equals the weighted class frequencies of ``y``."""
    freq = weighted_class_frequencies(y, w, n_classes)
    base = np.log(np.maximum(freq, PROBA_CLIP))
    return Ensemble(config, n_classes, base, bin_mapper, ())


def boost_round(ensemble: Ensemble, binned, y, w, raw=None) -> Ensemble:
    """Append one stage of ``n_classes`` trees fitted to the weighted log loss.

    ``raw`` may carry the current raw predictions for ``binned`` to skip
    recomputing them.
    """
    if raw is None:
        raw = ensemble.predict_raw_binned(binned)
    grad, hess = softmax_grad_hess(raw, y, w)
    cfg = ensemble.config
    trees = tuple(
        grow_tree(
            binned, grad[:, c], hess[:, c], ensemble.bin_mapper,
            max_depth=cfg.max_depth,
            min_child_weight=cfg.min_child_weight,
            l2_regularization=cfg.l2_regularization,
            min_samples_leaf=cfg.min_samples_leaf,
        )
        for c in range(ensemble.n_classes)
    )
    return Ensemble(cfg, ensemble.n_classes, ensemble.base_scores, ensemble.bin_mapper,
                    ensemble.stages + (trees,))


def fit_ensemble(features, y, w, n_classes, config: GbtConfig | None = None) -> Ensemble:
    """Convenience fit on a fixed training set (no horizon resampling)."""
    from .binning import bin_features

    config = config or GbtConfig()
    binned, mapper = bin_features(features, config.max_bins)
    ens = init_ensemble(config, n_classes, mapper, y, w)
    raw = ens.predict_raw_binned(binned)
    for _ in range(config.n_iterations):
        ens = boost_round(ens, binned, y, w, raw=raw)
        raw = raw.copy()
        _accumulate(binned, *_last_stage_packed(ens), mapper.missing_bin,
                    float(config.learning_rate), raw)
    return ens


def _last_stage_packed(ens):
    last = Ensemble(ens.config, ens.n_classes, ens.base_scores, ens.bin_mapper, ens.stages[-1:])
    return last._packed
