"""Weighted multiclass histogram gradient-boosted trees."""
import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

from .binning import BinMapper, bin_features, uniform_edges
from .ensemble import (
    Ensemble,
    GbtConfig,
    boost_round,
    fit_ensemble,
    init_ensemble,
    predict_proba,
)
from .loss import softmax, softmax_grad_hess, weighted_log_loss
from .tree import Tree, grow_tree


def set_threads(n):
    """Cap the number of threads used by the compiled kernels.

    Results do not depend on the thread count: parallel loops only run over
    independent features or rows.  ``None`` restores the maximum.
    """
    top = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(top if n is None else max(1, min(int(n), top)))


__all__ = [
    "BinMapper",
    "Ensemble",
    "GbtConfig",
    "Tree",
    "bin_features",
    "boost_round",
    "fit_ensemble",
    "grow_tree",
    "init_ensemble",
    "predict_proba",
    "set_threads",
    "softmax",
    "softmax_grad_hess",
    "uniform_edges",
    "weighted_log_loss",
]
