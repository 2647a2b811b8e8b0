"""Depth-wise histogram tree grower fitting one Newton step per leaf."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

# relative slack under which a split gain counts as rounding noise
_GAIN_RTOL = 1e-10


@dataclass(frozen=True)
class Tree:
    """Binary regression tree stored as parallel node arrays.

    Internal nodes have ``feature >= 0``; rows with ``bin <= bin_threshold``
    (equivalently ``x <= threshold``) go left, missing values follow
    ``missing_left``.  Leaves have ``feature == -1`` and carry ``value``.
    """

    feature: np.ndarray
    bin_threshold: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "bin_threshold": self.bin_threshold.tolist(),
            "threshold": self.threshold.tolist(),
            "missing_left": self.missing_left.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            bin_threshold=np.asarray(d["bin_threshold"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            missing_left=np.asarray(d["missing_left"], dtype=np.bool_),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


@njit(parallel=True, cache=True)
def _build_histograms(binned, rows, grad, hess, n_bins_total):
    n_features = binned.shape[1]
    hist = np.zeros((n_features, n_bins_total, 3))
    for j in prange(n_features):
        col = binned[:, j]
        for r in rows:
            b = col[r]
            hist[j, b, 0] += grad[r]
            hist[j, b, 1] += hess[r]
            hist[j, b, 2] += 1.0
    return hist


@njit(cache=True)
def _best_split(hist, n_bins, missing_bin, lam, min_child_weight, min_samples_leaf):
    """Scan every (feature, bin, missing side) split of a node.

    Returns (gain, feature, bin, missing_left).  Ties keep the first candidate
    in feature-then-bin order.
    """
    n_features = hist.shape[0]
    best_gain = 0.0
    best_feature = -1
    best_bin = -1
    best_missing_left = False
    g_tot = 0.0
    h_tot = 0.0
    c_tot = 0.0
    for b in range(hist.shape[1]):
        g_tot += hist[0, b, 0]
        h_tot += hist[0, b, 1]
        c_tot += hist[0, b, 2]
    parent = g_tot * g_tot / (h_tot + lam)

    for j in range(n_features):
        g_miss = hist[j, missing_bin, 0]
        h_miss = hist[j, missing_bin, 1]
        c_miss = hist[j, missing_bin, 2]
        has_missing = c_miss > 0
        nb = n_bins[j]
        last = nb - 1 if has_missing else nb - 2
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(last + 1):
            gl += hist[j, b, 0]
            hl += hist[j, b, 1]
            cl += hist[j, b, 2]
            for side in range(2):
                if side == 1 and (not has_missing or b == nb - 1):
                    continue
                if side == 0:
                    gL, hL, cL = gl, hl, cl
                else:
                    gL, hL, cL = gl + g_miss, hl + h_miss, cl + c_miss
                gR = g_tot - gL
                hR = h_tot - hL
                cR = c_tot - cL
                if cL < min_samples_leaf or cR < min_samples_leaf:
                    continue
                if hL < min_child_weight or hR < min_child_weight:
                    continue
                sl = gL * gL / (hL + lam)
                sr = gR * gR / (hR + lam)
                gain = sl + sr - parent
                if gain <= _GAIN_RTOL * (sl + sr + parent):
                    continue
                if gain > best_gain:
                    best_gain = gain
                    best_feature = j
                    best_bin = b
                    if has_missing:
                        best_missing_left = side == 1
                    else:
                        best_missing_left = cL >= cR
    return best_gain, best_feature, best_bin, best_missing_left


@njit(cache=True)
def _partition(binned, rows, feature, bin_threshold, missing_bin, missing_left):
    goes_left = np.empty(rows.shape[0], dtype=np.bool_)
    n_left = 0
    for i in range(rows.shape[0]):
        b = binned[rows[i], feature]
        if b == missing_bin:
            goes_left[i] = missing_left
        else:
            goes_left[i] = b <= bin_threshold
        n_left += goes_left[i]
    left = np.empty(n_left, dtype=rows.dtype)
    right = np.empty(rows.shape[0] - n_left, dtype=rows.dtype)
    il = 0
    ir = 0
    for i in range(rows.shape[0]):
        if goes_left[i]:
            left[il] = rows[i]
            il += 1
        else:
            right[ir] = rows[i]
            ir += 1
    return left, right


def grow_tree(binned, grad, hess, bin_mapper, max_depth=4, min_child_weight=1e-3,
              l2_regularization=0.0, min_samples_leaf=1):
    """Fit one regression tree to a Newton step of the loss.

    ``binned`` is the output of ``BinMapper.transform``; ``grad``/``hess`` are
    one class column of the per-row gradients and hessians.  Rows with zero
    gradient and hessian (e.g. zero sample weight) are ignored.
    """
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    hess = np.ascontiguousarray(hess, dtype=np.float64)
    lam = float(l2_regularization)
    n_bins = bin_mapper.n_bins
    missing_bin = bin_mapper.missing_bin
    n_bins_total = missing_bin + 1

    rows = np.flatnonzero((hess != 0) | (grad != 0))
    nodes = []  # [feature, bin, threshold, missing_left, left, right, value]
    queue = [(rows, 0)]
    head = 0
    while head < len(queue):
        node_rows, depth = queue[head]
        node_id = head
        head += 1
        g = grad[node_rows].sum()
        h = hess[node_rows].sum()
        denom = h + lam
        value = -g / denom if denom > 0 else 0.0
        nodes.append([-1, 0, 0.0, False, -1, -1, value])
        if depth >= max_depth or node_rows.size < 2 or h < 2 * min_child_weight:
            continue
        hist = _build_histograms(binned, node_rows, grad, hess, n_bins_total)
        gain, feature, bin_idx, missing_left = _best_split(
            hist, n_bins, missing_bin, lam, float(min_child_weight), float(min_samples_leaf)
        )
        if feature < 0:
            continue
        left_rows, right_rows = _partition(
            binned, node_rows, feature, bin_idx, missing_bin, missing_left
        )
        left_id = len(queue)
        queue.append((left_rows, depth + 1))
        queue.append((right_rows, depth + 1))
        nodes[node_id][:6] = [
            feature, bin_idx, bin_mapper.threshold(feature, bin_idx), missing_left,
            left_id, left_id + 1,
        ]
    # internal nodes keep their Newton value only for inspection
    cols = list(zip(*nodes))
    return Tree(
        feature=np.asarray(cols[0], dtype=np.int32),
        bin_threshold=np.asarray(cols[1], dtype=np.int32),
        threshold=np.asarray(cols[2], dtype=np.float64),
        missing_left=np.asarray(cols[3], dtype=np.bool_),
        left=np.asarray(cols[4], dtype=np.int32),
        right=np.asarray(cols[5], dtype=np.int32),
        value=np.asarray(cols[6], dtype=np.float64),
    )
