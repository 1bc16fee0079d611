"""Bijective cross-domain matching over semantic profiles.

Two routes produce a coupling: an exact rectangular assignment solve for
small problems, and a hierarchical scheme for large ones that recursively
co-partitions both profile sets with capacity-balanced k-means, matches
partitions by centroid cost, equalizes part sizes by moving boundary
points, and solves exact assignments on the leaves.  The hierarchy costs
O(n log n) assignment solves of bounded size instead of one O(n^3) solve.

Three devices keep the hierarchy's cost close to the exact optimum.  The
target-side split is a single capacity-balanced assignment against the
source side's converged centroids, so both partitions share the same
boundaries instead of drifting toward side-specific local optima.  After
a node's children are matched, a bounded "band repair" re-solves one
exact assignment over the points nearest the cut and the costliest
current pairs, undoing mistakes where the two sides spilled different
points across the boundary.  Finally the whole procedure runs in both
directions and the cheaper bijection is returned.  All three preserve
determinism and the quasilinear complexity bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._kmeans import balanced_lloyd, squared_distances
from .core import Coupling, DataValidationError, RngConfig
from .semantic import SemanticCost, SemanticProfile

DEFAULT_EXACT_CAP = 4096


@dataclass(frozen=True)
class HiRefParams:
    """Hierarchical matcher knobs.

    ``base_size`` is the largest subproblem solved exactly; ``branching``
    is the number of parts per recursion level.
    """

    base_size: int = 64
    branching: int = 2
    kmeans_iters: int = 50
    restarts: int = 4

    def __post_init__(self):
        if self.base_size < 2:
            raise DataValidationError("base_size must be at least 2")
        if not 2 <= self.branching <= self.base_size:
            raise DataValidationError("branching must lie in [2, base_size]")
        if self.kmeans_iters < 1 or self.restarts < 1:
            raise DataValidationError("kmeans_iters and restarts must be positive")


def exact_assignment(cost, *, cap: int = DEFAULT_EXACT_CAP) -> tuple[Coupling, float]:
    """Optimal bijective matching by the exact rectangular assignment solver.

    ``cost`` is a square dense matrix or a :class:`SemanticCost` operator.
    Refuses problems larger than ``cap`` (the dense solve is cubic); use
    :func:`hiref` beyond that.
    """
    if isinstance(cost, SemanticCost):
        n, m = cost.shape
        if n != m:
            raise DataValidationError(f"assignment needs equal sizes, got {n} and {m}")
        if n > cap:
            raise DataValidationError(
                f"problem size {n} exceeds exact cap {cap}; use hiref instead"
            )
        dense = cost.full()
    else:
        dense = np.asarray(cost, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DataValidationError(f"cost must be square, got shape {dense.shape}")
        if dense.shape[0] > cap:
            raise DataValidationError(
                f"problem size {dense.shape[0]} exceeds exact cap {cap}; use hiref instead"
            )
        if not np.isfinite(dense).all():
            raise DataValidationError("cost matrix contains non-finite values")
    rows, cols = linear_sum_assignment(dense)
    objective = float(dense[rows, cols].sum())
    return Coupling(cols), objective


def hiref(
    source: SemanticProfile,
    target: SemanticProfile,
    params: HiRefParams | None = None,
    rng: RngConfig | None = None,
) -> Coupling:
    """Hierarchical bijective matching of two equal-sized profile sets."""
    params = params or HiRefParams()
    if rng is None:
        raise DataValidationError("hiref requires an RngConfig")
    if not (source.normalized and target.normalized):
        raise DataValidationError("hiref requires normalized profiles")
    if source.n == 0:
        raise DataValidationError("hiref requires non-empty profiles")
    if source.n != target.n:
        raise DataValidationError(
            f"hiref needs equal sizes, got {source.n} and {target.n}"
        )
    if source.class_count != target.class_count:
        raise DataValidationError("profiles have different class counts")

    cost = SemanticCost(source, target)
    fwd = _hiref_direction(
        source.matrix, target.matrix, cost.block, source.n, params, rng, 0
    )
    bwd = _hiref_direction(
        target.matrix,
        source.matrix,
        lambda rows, cols: cost.block(cols, rows).T,
        source.n,
        params,
        rng,
        1,
    )
    inv = np.empty(source.n, dtype=np.int64)
    inv[bwd] = np.arange(source.n, dtype=np.int64)
    # Keep the cheaper of the two orientations; ties prefer forward.
    if cost.coupling_cost(inv) < cost.coupling_cost(fwd):
        return Coupling(inv)
    return Coupling(fwd)


def _hiref_direction(a, b, cost_block, n, params, rng, direction):
    """One oriented hierarchy pass; returns the forward index array."""
    forward = np.full(n, -1, dtype=np.int64)
    counter = 0

    def solve(src_idx, dst_idx):
        nonlocal counter
        if src_idx.size <= params.base_size:
            block = cost_block(src_idx, dst_idx)
            _, cols = linear_sum_assignment(block)
            forward[src_idx] = dst_idx[cols]
            return

        gen = rng.stream("hiref", direction, counter)
        counter += 1
        k = params.branching
        lab_a, cent_a = balanced_lloyd(
            a[src_idx], k, gen, params.kmeans_iters, params.restarts
        )
        # The target split is one capacity-balanced assignment against the
        # source centroids: shared boundaries keep the two partitions
        # composed of corresponding points, which is what leaf solves need.
        lab_b, cent_b = balanced_lloyd(b[dst_idx], k, gen, 1, 1, init=cent_a)

        parts_a = [src_idx[lab_a == g] for g in range(k)]
        parts_b = [dst_idx[lab_b == g] for g in range(k)]
        sizes_a = np.array([p.size for p in parts_a], dtype=np.int64)

        # Match parts across domains on size-weighted centroid costs.
        centroid_cost = sizes_a[:, None] * squared_distances(cent_a, cent_b)
        _, sigma = linear_sum_assignment(centroid_cost)

        matched_b = [parts_b[sigma[g]] for g in range(k)]
        matched_b = _equalize_parts(b, matched_b, cent_b[sigma], sizes_a)
        for g in range(k):
            solve(parts_a[g], matched_b[g])
        _band_repair(a, b, cost_block, forward, src_idx, parts_a, cent_a, params)

    solve(
        np.arange(n, dtype=np.int64),
        np.arange(n, dtype=np.int64),
    )
    return forward


def _band_repair(a, b, cost_block, forward, src_idx, parts_a, cent_a, params):
    """Re-solve one bounded assignment across a node's internal cuts.

    The band is the union of, per part, the ``base_size`` source points
    with the smallest centroid margin (nearest the cut) and, node-wide,
    the ``base_size`` pairs with the highest current cost.  Re-matching
    the band against its own partners permutes existing assignments only,
    so bijectivity is preserved, and the block solve never increases the
    node's total cost.
    """
    m = params.base_size
    picks = []
    for g, part in enumerate(parts_a):
        d = squared_distances(a[part], cent_a)
        own = d[:, g]
        others = np.delete(d, g, axis=1).min(axis=1)
        take = min(m, part.size)
        picks.append(part[np.argsort(others - own, kind="stable")[:take]])
    # Pair cost is monotone decreasing in the profile dot product, so the
    # lowest dots are the costliest current pairs.
    dots = np.einsum("ij,ij->i", a[src_idx], b[forward[src_idx]])
    picks.append(src_idx[np.argsort(dots, kind="stable")[: min(m, src_idx.size)]])
    band = np.unique(np.concatenate(picks))
    partners = forward[band]
    block = cost_block(band, partners)
    _, cols = linear_sum_assignment(block)
    forward[band] = partners[cols]


def _equalize_parts(points, parts, centroids, target_sizes):
    """Move boundary points between parts until sizes match ``target_sizes``.

    Each move takes the (point, destination) pair with the smallest
    increase in centroid distance; ties resolve to the lowest point index,
    then the lowest destination part.
    """
    parts = [np.array(p, dtype=np.int64) for p in parts]
    sizes = np.array([p.size for p in parts], dtype=np.int64)
    while True:
        over = np.flatnonzero(sizes > target_sizes)
        under = np.flatnonzero(sizes < target_sizes)
        if over.size == 0:
            break
        best = None  # (delta, point, from_part, to_part)
        for g in over:
            members = parts[g]
            d_cur = squared_distances(points[members], centroids[g : g + 1]).ravel()
            for h in under:
                d_new = squared_distances(points[members], centroids[h : h + 1]).ravel()
                delta = d_new - d_cur
                i = int(np.argmin(delta))
                cand = (float(delta[i]), int(members[i]), int(g), int(h))
                if best is None or _move_wins(cand, best):
                    best = cand
        _, point, g, h = best
        parts[g] = parts[g][parts[g] != point]
        parts[h] = np.sort(np.append(parts[h], point))
        sizes[g] -= 1
        sizes[h] += 1
    return parts


def _move_wins(cand, best) -> bool:
    if cand[0] != best[0]:
        return cand[0] < best[0]
    if cand[1] != best[1]:
        return cand[1] < best[1]
    return cand[3] < best[3]
