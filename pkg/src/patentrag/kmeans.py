"""Seeded k-means (k-means++ init, Lloyd iterations) used to train IVF partitions."""

from __future__ import annotations

from typing import Optional

import numpy as np

MAX_ITER = 25
TOL = 1e-6
N_INIT = 5


def sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared L2 distances, shape (n, k); clipped at zero."""
    d = (x * x).sum(1)[:, None] - 2.0 * (x @ centroids.T) + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the lowest index on ties
    return sq_distances(x, centroids).argmin(axis=1)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each step draws ``2 + ln k`` D^2-weighted candidates
    and keeps the one giving the lowest total squared distance."""
    n = len(x)
    trials = 2 + int(np.log(k))
    chosen = [int(rng.integers(n))]
    closest = sq_distances(x, x[chosen]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            cands = np.unique(rng.choice(n, size=trials, p=closest / total))
        else:
            # every point coincides with a centre; fall back to an unused index
            cands = np.array([rng.choice(np.setdiff1d(np.arange(n), chosen))])
        pots = np.minimum(closest[None, :], sq_distances(x[cands], x))
        best = int(pots.sum(axis=1).argmin())
        chosen.append(int(cands[best]))
        closest = pots[best]
    return x[chosen].copy()


def _lloyd(x: np.ndarray, centroids: np.ndarray, k: int, max_iter: int, tol: float):
    labels = assign(x, centroids)
    for _ in range(max_iter):
        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        if len(empty):
            far = sq_distances(x, centroids)[np.arange(len(x)), labels]
            for c in empty:
                idx = int(far.argmax())
                new[c] = x[idx]
                far[idx] = -1.0
        shift = np.sqrt(((new - centroids) ** 2).sum(1)).max()
        centroids = new
        labels = assign(x, centroids)
        if shift < tol:
            break
    return centroids, labels


def inertia(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((x - centroids[labels]) ** 2).sum())


def kmeans(x: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER, tol: float = TOL,
           init: Optional[np.ndarray] = None, n_init: int = N_INIT):
    """Cluster rows of ``x`` into ``k`` groups.

    Each of ``n_init`` restarts (all drawn from one generator seeded by
    ``seed``) runs Lloyd rounds until ``max_iter`` or until no centroid moves
    more than ``tol``; the restart with the lowest inertia wins, the earliest
    on ties. A cluster left empty by an assignment step is re-seeded with the
    point lying farthest from its own centroid. ``init`` overrides the
    k-means++ seeding and implies a single run.

    Returns:
        (centroids, labels): float64 arrays of shape (k, d) and (n,)
    """
    x = np.asarray(x, dtype=np.float64)
    if init is not None:
        return _lloyd(x, np.array(init, dtype=np.float64), k, max_iter, tol)
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(max(1, n_init)):
        run = _lloyd(x, kmeans_plusplus(x, k, rng), k, max_iter, tol)
        score = inertia(x, *run)
        if score < best_inertia:
            best, best_inertia = run, score
    return best
