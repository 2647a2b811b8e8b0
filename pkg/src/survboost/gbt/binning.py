"""Quantile binning of continuous features into at most 255 bins.

Bin ``b`` of feature ``j`` holds the values ``x`` with
``edges[j][b-1] < x <= edges[j][b]``; NaN goes to the reserved bin
``missing_bin`` (= ``max_bins``) for every feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BIN_DTYPE = np.uint8


def _feature_edges(col, max_bins):
    values = col[~np.isnan(col)]
    if values.size == 0:
        return np.empty(0)
    distinct = np.unique(values)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    percentiles = np.linspace(0, 100, max_bins + 1)[1:-1]
    edges = np.percentile(values, percentiles, method="midpoint")
    edges = np.unique(edges)
    # an edge equal to the max would leave the top bin empty
    return edges[edges < distinct[-1]]


@dataclass(frozen=True)
class BinMapper:
    edges: tuple  # one increasing float array per feature
    max_bins: int

    @property
    def missing_bin(self) -> int:
        return self.max_bins

    @property
    def n_features(self) -> int:
        return len(self.edges)

    @property
    def n_bins(self) -> np.ndarray:
        """Number of non-missing bins per feature."""
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError(
                f"expected a 2-d array with {self.n_features} columns, got shape {features.shape}"
            )
        out = np.empty(features.shape, dtype=BIN_DTYPE, order="F")
        for j, edges in enumerate(self.edges):
            out[:, j] = self.transform_column(features[:, j], j)
        return out

    def transform_column(self, col, j) -> np.ndarray:
        col = np.asarray(col, dtype=np.float64)
        binned = np.searchsorted(self.edges[j], col, side="left").astype(BIN_DTYPE)
        binned[np.isnan(col)] = self.missing_bin
        return binned

    def threshold(self, feature, bin_index) -> float:
        """Raw-value threshold equivalent to ``bin <= bin_index``."""
        e = self.edges[feature]
        return float(e[bin_index]) if bin_index < e.size else float("inf")

    def append(self, edges) -> "BinMapper":
        edges = np.asarray(edges, dtype=np.float64)
        if edges.size > self.max_bins - 1:
            raise ValueError("too many edges for max_bins")
        return BinMapper(self.edges + (edges,), self.max_bins)


def bin_features(features, max_bins=255):
    """Fit quantile bin edges on ``features``; return ``(binned, mapper)``."""
    if not 2 <= max_bins <= 255:
        raise ValueError("max_bins must be in [2, 255]")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    edges = tuple(_feature_edges(features[:, j], max_bins) for j in range(features.shape[1]))
    mapper = BinMapper(edges, max_bins)
    return mapper.transform(features), mapper


def uniform_edges(upper, max_bins=255):
    """Edges splitting ``(0, upper)`` into ``max_bins`` equal-width bins."""
    return np.linspace(0.0, upper, max_bins + 1)[1:-1]
