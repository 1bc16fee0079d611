"""Deterministic k-means variants shared by transport and embedding.

Initialization is farthest-point seeding from a seeded start index; all
ties (equal distances, equal objectives) resolve to the lowest index, so
identical inputs and generator state give identical clusterings on every
platform and thread count.
"""

from __future__ import annotations

import numpy as np


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clamped at zero."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def farthest_point_indices(x: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    """Seed indices: a random start, then repeatedly the point farthest
    from the chosen set (ties broken toward the lowest index)."""
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(gen.integers(n))
    min_d = squared_distances(x, x[chosen[:1]]).ravel()
    for i in range(1, k):
        nxt = int(np.argmax(min_d))
        chosen[i] = nxt
        np.minimum(min_d, squared_distances(x, x[nxt : nxt + 1]).ravel(), out=min_d)
    return chosen


def _assign_chunked(x: np.ndarray, centroids: np.ndarray, chunk: int = 2048):
    """(labels, min squared distance) per row, computed in row chunks."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d = squared_distances(x[lo:hi], centroids)
        labels[lo:hi] = np.argmin(d, axis=1)
        best[lo:hi] = d[np.arange(hi - lo), labels[lo:hi]]
    return labels, best


def _update_centroids(x, labels, k):
    d = x.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return sums, counts


def lloyd(
    x: np.ndarray,
    k: int,
    gen: np.random.Generator,
    iters: int = 30,
    restarts: int = 1,
):
    """Plain k-means. Returns (labels, centroids, objective).

    Empty clusters are re-seeded with the currently worst-fit point.
    Among restarts the strictly lowest objective wins (earlier restart on
    ties).
    """
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    best_result = None
    for _ in range(restarts):
        centroids = x[farthest_point_indices(x, k, gen)].copy()
        labels = np.full(n, -1, dtype=np.int64)
        for _ in range(iters):
            new_labels, dist = _assign_chunked(x, centroids)
            # Re-seed empty clusters with the worst-fit points.
            counts = np.bincount(new_labels, minlength=k)
            for c in np.flatnonzero(counts == 0):
                worst = int(np.argmax(dist))
                new_labels[worst] = c
                dist[worst] = 0.0
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            sums, counts = _update_centroids(x, labels, k)
            # Re-seeding can empty the donor of a stolen singleton; such a
            # cluster keeps its previous centroid until the next pass.
            filled = counts > 0
            centroids[filled] = sums[filled] / counts[filled][:, None]
        _, dist = _assign_chunked(x, centroids)
        objective = float(np.sum(dist))
        if best_result is None or objective < best_result[0]:
            best_result = (objective, labels, centroids)
    return best_result[1], best_result[2], best_result[0]


def balanced_lloyd(
    x: np.ndarray,
    k: int,
    gen: np.random.Generator,
    iters: int = 50,
    restarts: int = 4,
    init: np.ndarray | None = None,
):
    """Capacity-balanced k-means: cluster sizes differ by at most one.

    Assignment is greedy by regret: points are ordered by how much they
    lose if denied their nearest centroid (descending; index ascending on
    ties) and each takes its nearest centroid with remaining capacity.
    When ``init`` centroids are given, a single warm-started run replaces
    the seeded restarts; cluster indices then stay tied to the rows of
    ``init``.  Returns (labels, centroids).
    """
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    base, extra = divmod(n, k)
    caps_template = np.full(k, base, dtype=np.int64)
    caps_template[:extra] += 1

    if init is not None:
        starts = [np.asarray(init, dtype=np.float64).copy()]
    else:
        starts = [x[farthest_point_indices(x, k, gen)].copy() for _ in range(restarts)]
    best = None
    for centroids in starts:
        labels = np.full(n, -1, dtype=np.int64)
        for _ in range(iters):
            new_labels = _balanced_assign(x, centroids, caps_template)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            sums, counts = _update_centroids(x, labels, k)
            centroids = sums / counts[:, None]  # capacities keep clusters non-empty
        d = squared_distances(x, centroids)
        objective = float(d[np.arange(n), labels].sum())
        if best is None or objective < best[0]:
            best = (objective, labels, centroids)
    return best[1], best[2]


def _balanced_assign(x, centroids, caps_template):
    d = squared_distances(x, centroids)
    k = centroids.shape[0]
    n = x.shape[0]
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    part = np.partition(d, 1, axis=1)
    regret = part[:, 1] - part[:, 0]
    order = np.lexsort((np.arange(n), -regret))
    remaining = caps_template.copy()
    labels = np.empty(n, dtype=np.int64)
    open_mask = np.ones(k, dtype=bool)
    for i in order:
        row = np.where(open_mask, d[i], np.inf)
        c = int(np.argmin(row))
        labels[i] = c
        remaining[c] -= 1
        if remaining[c] == 0:
            open_mask[c] = False
    return labels
