"""Clustering evaluation: accuracy under optimal label mapping, and NMI.

Accuracy maximizes agreement over one-to-one cluster-to-class mappings via
maximum-weight matching on the confusion matrix. NMI normalizes mutual
information by the larger of the two marginal entropies (natural log; the
ratio is base-invariant) and is 0 when the mutual information is 0.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError


def _as_labels(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr.astype(np.int64)


def confusion_matrix(true, pred):
    """Square zero-padded count matrix C[t, p] = #(true==t and pred==p)."""
    true = _as_labels(true, "true")
    pred = _as_labels(pred, "pred")
    if true.shape[0] != pred.shape[0]:
        raise ShapeError(f"length mismatch: {true.shape[0]} vs {pred.shape[0]}")
    k = int(max(true.max(), pred.max())) + 1 if true.size else 0
    c = np.zeros((k, k), dtype=np.int64)
    np.add.at(c, (true, pred), 1)
    return c


def hungarian(weights):
    """Permutation maximizing the total weight of a square matrix.

    Returns perm with perm[i] = column assigned to row i.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"weight matrix must be square, got shape {w.shape}")
    rows, cols = linear_sum_assignment(-w)
    perm = np.empty(w.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def accuracy(true, pred):
    """Best-mapping clustering accuracy in [0, 1]."""
    c = confusion_matrix(true, pred)
    n = np.asarray(true).shape[0]
    # match predicted clusters (rows of c.T) to true classes
    w = c.T.astype(np.float64)
    perm = hungarian(w)
    return float(w[np.arange(w.shape[0]), perm].sum() / n)


def nmi(true, pred):
    """Normalized mutual information I(l;c)/max{H(l), H(c)}; 0 when I is 0."""
    c = confusion_matrix(true, pred)
    n = c.sum()
    p_true = c.sum(axis=1) / n
    p_pred = c.sum(axis=0) / n
    ti, pj = np.nonzero(c)
    p_joint = c[ti, pj] / n
    info = float(
        (p_joint * (np.log(p_joint) - np.log(p_true[ti]) - np.log(p_pred[pj]))).sum()
    )
    h_true = float(-(p_true[p_true > 0] * np.log(p_true[p_true > 0])).sum())
    h_pred = float(-(p_pred[p_pred > 0] * np.log(p_pred[p_pred > 0])).sum())
    denom = max(h_true, h_pred)
    if denom <= 0.0 or info <= 0.0:
        return 0.0
    return info / denom
