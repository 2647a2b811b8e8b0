"""Sample-weighted multiclass log loss through a softmax link."""
import numpy as np

PROBA_CLIP = 1e-15


def softmax(raw):
    raw = np.asarray(raw, dtype=np.float64)
    z = raw - raw.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def softmax_grad_hess(raw, y, w):
    """Gradient and diagonal hessian of ``sum_i w_i * -log softmax(raw_i)[y_i]``.

    Both have the shape of ``raw``; rows with zero weight get zeros.
    """
    p = softmax(raw)
    w = np.asarray(w, dtype=np.float64)[:, None]
    onehot = np.zeros_like(p)
    onehot[np.arange(p.shape[0]), np.asarray(y, dtype=np.int64)] = 1.0
    grad = w * (p - onehot)
    hess = w * p * (1.0 - p)
    return grad, hess


def weighted_log_loss(proba, y, w):
    """Mean over rows of ``-w_i log p_i[y_i]``, probabilities clipped away from 0 and 1."""
    proba = np.asarray(proba, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    picked = np.clip(proba[np.arange(proba.shape[0]), y], PROBA_CLIP, 1.0 - PROBA_CLIP)
    return float(np.mean(np.asarray(w, dtype=np.float64) * -np.log(picked)))


def weighted_class_frequencies(y, w, n_classes):
    w = np.asarray(w, dtype=np.float64)
    totals = np.bincount(np.asarray(y, dtype=np.int64), weights=w, minlength=n_classes)
    s = totals.sum()
    if s <= 0:
        return np.full(n_classes, 1.0 / n_classes)
    return totals / s
