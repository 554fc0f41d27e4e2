"""Executable threshold theory: validity predicates and property checkers.

The checkers scan arbitrary soft-assignment matrices for violations of the
guarantees that hold whenever zeta > 2/3 and gamma < zeta^2: adjacent pairs
(inner product >= zeta) share an argmax, and two samples adjacent to a common
third are never dissimilar (inner product <= gamma). Comparisons absorb float
rounding with a 1e-12 tolerance.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

TOL = 1e-12
RESIDUAL_BIN_EDGES = np.round(np.arange(0.0, 2.0 + 1e-9, 0.1), 10)


@dataclass
class ThresholdVerdict:
    valid: bool
    reasons: list

    def __bool__(self):
        return self.valid


@dataclass
class AdjacencyReport:
    """Neighbor counts (self excluded), orphan indices, and argmax violations."""

    adjacency_counts: np.ndarray
    orphans: np.ndarray
    violations: list  # (i, j, inner, argmax_i, argmax_j)


@dataclass
class DissimilarReport:
    """Violations of the dissimilarity guarantees.

    pair_violations: dissimilar pairs sharing an argmax while both row maxima
    clear zeta. triple_violations: pairs dissimilar despite a common adjacent
    neighbor. Both must be empty under valid thresholds.
    """

    pair_violations: list = field(default_factory=list)
    triple_violations: list = field(default_factory=list)
    adjacency_assumption_holds: bool = True
    thresholds: ThresholdVerdict | None = None


def thresholds_valid(zeta, gamma):
    """Verdict on (zeta, gamma): range, zeta > 2/3, and gamma < zeta^2."""
    reasons = []
    if not 0.0 <= gamma < zeta <= 1.0:
        reasons.append(f"need 0 <= gamma < zeta <= 1, got zeta={zeta}, gamma={gamma}")
    if zeta <= 2.0 / 3.0:
        reasons.append(f"zeta={zeta} must exceed 2/3 for adjacency to imply same cluster")
    if gamma >= zeta**2:
        reasons.append(f"gamma={gamma} must be below zeta^2={zeta ** 2:.6g}")
    return ThresholdVerdict(valid=not reasons, reasons=reasons)


def _as_simplex(q):
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    sums = q.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or q.min() < -1e-9:
        raise ContractError("rows must lie on the probability simplex")
    return q


def check_inner_bound(q_i, q_j):
    """True iff q_i . q_j <= min(max(q_i), max(q_j)) within tolerance."""
    q_i = _as_simplex(q_i)[0]
    q_j = _as_simplex(q_j)[0]
    return float(q_i @ q_j) <= min(q_i.max(), q_j.max()) + TOL


def check_adjacency_cluster(q, zeta):
    """Flags adjacent pairs whose argmaxes differ (guaranteed none for zeta > 2/3)."""
    if zeta <= 2.0 / 3.0:
        raise ConfigError(f"adjacency check requires zeta > 2/3, got {zeta}")
    q = _as_simplex(q)
    s = q @ q.T
    adjacent = s >= zeta
    np.fill_diagonal(adjacent, False)
    counts = adjacent.sum(axis=1)
    orphans = np.flatnonzero(counts == 0)
    labels = np.argmax(q, axis=1)
    viol_i, viol_j = np.nonzero(adjacent & (labels[:, None] != labels[None, :]))
    violations = [
        (int(i), int(j), float(s[i, j]), int(labels[i]), int(labels[j]))
        for i, j in zip(viol_i, viol_j)
        if i < j
    ]
    return AdjacencyReport(adjacency_counts=counts, orphans=orphans, violations=violations)


def check_dissimilar_cluster(q, thr):
    """Checks the dissimilarity guarantees; precondition failures are reported.

    (a) dissimilar pairs (inner <= gamma) sharing an argmax while both row
    maxima reach zeta; (b) pairs with a common adjacent neighbor that are
    nonetheless dissimilar. Empty lists whenever gamma < zeta^2.
    """
    q = _as_simplex(q)
    verdict = thresholds_valid(thr.zeta, thr.gamma)
    s = q @ q.T
    labels = np.argmax(q, axis=1)
    maxima = q.max(axis=1)
    dissimilar = s <= thr.gamma
    np.fill_diagonal(dissimilar, False)

    confident = maxima >= thr.zeta - TOL
    same_label = labels[:, None] == labels[None, :]
    both_confident = confident[:, None] & confident[None, :]
    pv_i, pv_j = np.nonzero(dissimilar & same_label & both_confident)
    pair_violations = [
        (int(i), int(j), float(s[i, j])) for i, j in zip(pv_i, pv_j) if i < j
    ]

    adjacent = s >= thr.zeta
    np.fill_diagonal(adjacent, False)
    common = adjacent.astype(np.float64) @ adjacent.astype(np.float64)
    tv_j, tv_k = np.nonzero(dissimilar & (common >= 1.0))
    triple_violations = [
        (int(j), int(k), float(s[j, k]), int(common[j, k]))
        for j, k in zip(tv_j, tv_k)
        if j < k
    ]
    return DissimilarReport(
        pair_violations=pair_violations,
        triple_violations=triple_violations,
        adjacency_assumption_holds=bool(adjacent.any(axis=1).all()),
        thresholds=verdict,
    )


def orphan_count(q, zeta):
    """Samples with no adjacent neighbor other than themselves: (count, fraction)."""
    q = _as_simplex(q)
    s = q @ q.T
    adjacent = s >= zeta
    np.fill_diagonal(adjacent, False)
    count = int((~adjacent.any(axis=1)).sum())
    return count, count / q.shape[0]


def residuals(q):
    """One-hot residuals h_i = ||onehot(argmax q_i) - q_i||_1 plus fixed histogram.

    Returns (h, bin_counts, bin_edges) with edges [0, 0.1, ..., 2.0].
    """
    q = _as_simplex(q)
    labels = np.argmax(q, axis=1)
    onehot = np.zeros_like(q)
    onehot[np.arange(q.shape[0]), labels] = 1.0
    h = np.abs(onehot - q).sum(axis=1)
    counts, edges = np.histogram(h, bins=RESIDUAL_BIN_EDGES)
    return h, counts, edges
