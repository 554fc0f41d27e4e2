"""Fuzzy cluster memberships, center maintenance, and k-means initialization.

Memberships follow the inverse-distance form with fuzziness exponent m > 1:
p_ik is proportional to ||u_i - mu_k||^(-2/(m-1)), normalized over clusters.
Squared distances are clamped below EPS_DIST2 so a point sitting exactly on
a center yields an (approximately) one-hot row instead of a division by zero.
"""

import numpy as np

from .errors import ConfigError, DegenerateClusterError, ShapeError

EPS_DIST2 = 1e-12


def squared_distances(u, centers):
    """Pairwise squared Euclidean distances, shape (N, K)."""
    u = np.asarray(u, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if u.ndim != 2 or centers.ndim != 2:
        raise ShapeError("points and centers must be 2-D")
    if u.shape[1] != centers.shape[1]:
        raise ShapeError(f"dim mismatch: points {u.shape[1]}, centers {centers.shape[1]}")
    diff = u[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def memberships(u, centers, m):
    """Membership matrix of u rows against cluster centers.

    Parameters
    ----------
    u : (N, d) array
        Latent points.
    centers : (K, d) array
        Cluster centers.
    m : float
        Fuzziness exponent, must be > 1.

    Returns
    -------
    (N, K) array
        Rows on the probability simplex; p_ik grows as u_i approaches
        center k.
    """
    if m <= 1.0:
        raise ConfigError(f"fuzziness m must be > 1, got {m}")
    d2 = np.maximum(squared_distances(u, centers), EPS_DIST2)
    w = d2 ** (-1.0 / (m - 1.0))
    return w / w.sum(axis=1, keepdims=True)


def update_centers(u, p, m):
    """Weighted center update: mu_k = sum_i p_ik^m u_i / sum_i p_ik^m.

    Runs over the full point set it is handed. Raises DegenerateClusterError
    when a cluster's total fuzzified mass falls below 1e-12.

    The per-cluster accumulation uses one numpy reduction over the same axis
    as the class-mean oracle, so one-hot memberships reproduce class means
    bitwise.
    """
    u = np.asarray(u, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if u.shape[0] != p.shape[0]:
        raise ShapeError(f"row count mismatch: points {u.shape[0]}, memberships {p.shape[0]}")
    f = p**m
    mass = f.sum(axis=0)
    for k, total in enumerate(mass):
        if total < 1e-12:
            raise DegenerateClusterError(k, total)
    centers = np.empty((p.shape[1], u.shape[1]))
    for k in range(p.shape[1]):
        centers[k] = np.sum(f[:, k][:, None] * u, axis=0) / mass[k]
    return centers


def nearest_centers(u, centers):
    """Crisp assignment: index of the closest center per row (ties: lowest)."""
    return np.argmin(squared_distances(u, centers), axis=1)


def kmeans_init(u, k, seed, max_iters=100):
    """Lloyd's algorithm from seeded farthest-point starts.

    The first center is a seeded random point; the rest greedily maximize
    distance to the chosen set. Empty clusters are repaired by stealing the
    point farthest from its assigned center. Deterministic per seed.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if n < k:
        raise ConfigError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2_min = ((u - u[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2_min))
        chosen.append(nxt)
        d2_min = np.minimum(d2_min, ((u - u[nxt]) ** 2).sum(axis=1))
    centers = u[chosen].copy()

    labels = nearest_centers(u, centers)
    for _ in range(max_iters):
        new_centers = np.empty_like(centers)
        d2 = squared_distances(u, centers)
        own = d2[np.arange(n), labels]
        stolen = set()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = u[mask].mean(axis=0)
            else:
                # repair: steal the globally farthest point not already taken
                order = np.argsort(-own)
                pick = next(int(i) for i in order if int(i) not in stolen)
                stolen.add(pick)
                new_centers[j] = u[pick]
        new_labels = nearest_centers(u, new_centers)
        centers = new_centers
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers
