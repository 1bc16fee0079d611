"""Geometry-preserving forest proximities with out-of-bag correction.

For a query sample i and a labeled target j, the proximity is the average
over i's counted trees of j's bootstrap multiplicity in i's leaf divided
by the leaf's total in-bag multiplicity.  Labeled queries count only trees
where they are out of bag; unlabeled queries count every tree.  Unlabeled
targets contribute unit weight in every tree instead of bootstrap counts.

The accumulation order is pinned: contributions are summed per (query,
target) pair in ascending tree order with a strict left fold, then divided
by the number of counted trees.  Each tree's contribution is merged into a
running sparse sum, so memory stays proportional to the final affinity
pattern rather than to the total number of per-tree co-occurrences, and
results are independent of chunking or thread count down to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import AffinityMatrix, DataValidationError, LabeledDomain, NumericalError
from .forest import Forest


@dataclass(frozen=True)
class DirectedProximity:
    """Query-to-target proximities before symmetrization.

    ``matrix`` has one row per domain sample and one column per target;
    ``targets`` maps column positions to domain indices.
    """

    matrix: sp.csr_matrix
    targets: np.ndarray
    kind: str  # "labeled" or "unlabeled"


def _check_compatible(forest: Forest, domain: LabeledDomain) -> None:
    if forest.n_features != domain.dim:
        raise DataValidationError(
            f"forest expects {forest.n_features} features, domain has {domain.dim}"
        )
    if not np.array_equal(forest.labeled_indices, domain.labeled_indices):
        raise DataValidationError(
            "forest was trained on a different labeled subset than this domain"
        )


def _all_leaves(forest: Forest, domain: LabeledDomain) -> np.ndarray:
    """Leaf of every domain sample in every tree, shape (n, n_trees).

    Labeled rows reuse the leaf assignments recorded at training time;
    unlabeled rows are routed through the trees.
    """
    n = domain.n
    leaves = np.empty((n, forest.n_trees), dtype=np.int32)
    leaves[domain.labeled_indices] = forest.train_leaves
    unl = domain.unlabeled_indices
    if unl.size:
        leaves[unl] = forest.apply(domain.features[unl])
    return leaves


def _counted_trees(forest: Forest, domain: LabeledDomain) -> np.ndarray:
    """Number of counted trees per query row (OOB count, or all trees)."""
    n_trees = forest.n_trees
    counts = np.full(domain.n, n_trees, dtype=np.int64)
    oob = forest.oob_mask().sum(axis=0)
    counts[domain.labeled_indices] = oob
    if np.any(oob == 0):
        bad = domain.labeled_indices[np.flatnonzero(oob == 0)[0]]
        raise NumericalError(
            f"labeled sample {bad} is in-bag in every tree; increase n_trees"
        )
    return counts


def _group_join(keys_a: np.ndarray, keys_b: np.ndarray):
    """Index pairs (ia, ib) with keys_a[ia] == keys_b[ib].

    Emits the full cartesian product within each shared key.  Pair order is
    deterministic but unspecified; callers must not rely on it.
    """
    empty = np.empty(0, dtype=np.int64)
    if keys_a.size == 0 or keys_b.size == 0:
        return empty, empty
    oa = np.argsort(keys_a, kind="stable")
    ob = np.argsort(keys_b, kind="stable")
    ua, a_start, a_count = np.unique(keys_a[oa], return_index=True, return_counts=True)
    ub, b_start, b_count = np.unique(keys_b[ob], return_index=True, return_counts=True)
    common, pa, pb = np.intersect1d(ua, ub, assume_unique=True, return_indices=True)
    if common.size == 0:
        return empty, empty
    sa = a_count[pa]
    sb = b_count[pb]
    astart = a_start[pa]
    bstart = b_start[pb]
    pair_counts = sa * sb
    total = int(pair_counts.sum())
    grp = np.repeat(np.arange(common.size), pair_counts)
    offsets = np.concatenate(([0], np.cumsum(pair_counts)[:-1]))
    within = np.arange(total, dtype=np.int64) - offsets[grp]
    sb_rep = sb[grp]
    a_off = within // sb_rep
    b_off = within - a_off * sb_rep
    return oa[astart[grp] + a_off], ob[bstart[grp] + b_off]


def _merge_tree(total, rows, cols, vals, shape):
    """Fold one tree's contributions into the running sum.

    Within a tree every (row, col) pair is unique (a query has one leaf),
    so sparse addition appends exactly one term per pair.  Adding trees in
    ascending order realizes the same left-to-right fold a per-tree
    accumulation loop would, keeping results bit-stable.
    """
    part = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    if total is None:
        return part
    return total + part


def _divide_rows(total, counted, n_rows, n_cols):
    """Divide each row of the summed matrix by its counted-tree total."""
    if total is None:
        return sp.csr_matrix((n_rows, n_cols))
    total.sort_indices()
    if total.nnz:
        total.data = total.data / np.repeat(
            counted.astype(np.float64), np.diff(total.indptr)
        )
    return total


def rfgap_labeled(forest: Forest, domain: LabeledDomain) -> DirectedProximity:
    """Proximities from every sample to the labeled targets, shape (n, n_labeled).

    Off-diagonal entries weight targets by bootstrap multiplicity over the
    query's counted trees; the diagonal (labeled self-similarity) averages
    the sample's own multiplicity over the trees where it is in bag.
    """
    _check_compatible(forest, domain)
    labeled = domain.labeled_indices
    n, n_lab, n_trees = domain.n, labeled.size, forest.n_trees
    leaves = _all_leaves(forest, domain)
    counted = _counted_trees(forest, domain)

    diag_acc = np.zeros(n_lab, dtype=np.float64)
    diag_trees = np.zeros(n_lab, dtype=np.int64)

    query_rows = np.arange(n, dtype=np.int64)
    labeled_mask = np.zeros(n, dtype=bool)
    labeled_mask[labeled] = True
    row_to_pos = np.full(n, -1, dtype=np.int64)
    row_to_pos[labeled] = np.arange(n_lab)

    total = None
    for t in range(n_trees):
        inbag_t = forest.inbag[t]
        leaf_train = forest.train_leaves[:, t]
        in_pos = np.flatnonzero(inbag_t > 0)
        bag_w = inbag_t[in_pos].astype(np.float64)
        bag_leaf = leaf_train[in_pos]
        n_leaves = forest.trees[t].n_leaves
        mass = np.bincount(bag_leaf, weights=bag_w, minlength=n_leaves)

        # Labeled rows are counted only when out of bag in this tree.
        counted_q = ~labeled_mask | (labeled_mask & (inbag_t[row_to_pos.clip(0)] == 0))
        q_rows = query_rows[counted_q]
        q_leaf = leaves[q_rows, t]

        ia, ib = _group_join(q_leaf, bag_leaf)
        if ia.size:
            total = _merge_tree(
                total,
                q_rows[ia],
                in_pos[ib],
                bag_w[ib] / mass[q_leaf[ia]],
                (n, n_lab),
            )

        # Self-similarity: in-bag trees contribute c_i / |M_i| on the diagonal.
        diag_acc[in_pos] += bag_w / mass[bag_leaf]
        diag_trees[in_pos] += 1

    if np.any(diag_trees == 0):
        bad = labeled[np.flatnonzero(diag_trees == 0)[0]]
        raise NumericalError(
            f"labeled sample {bad} is out of bag in every tree; increase n_trees"
        )

    off_diag = _divide_rows(total, counted, n, n_lab)
    diag = sp.csr_matrix(
        (diag_acc / diag_trees.astype(np.float64), (labeled, np.arange(n_lab))),
        shape=(n, n_lab),
    )
    matrix = off_diag + diag
    matrix.sort_indices()
    return DirectedProximity(matrix=matrix, targets=labeled, kind="labeled")


def rfgap_unlabeled(forest: Forest, domain: LabeledDomain) -> DirectedProximity:
    """Proximities from every sample to the unlabeled targets, shape (n, n_unlabeled).

    Unlabeled targets are never in any bootstrap, so each counted tree
    contributes unit weight divided by the in-bag mass of the query's leaf.
    """
    _check_compatible(forest, domain)
    labeled = domain.labeled_indices
    unl = domain.unlabeled_indices
    n, n_unl, n_trees = domain.n, unl.size, forest.n_trees
    if n_unl == 0:
        return DirectedProximity(
            matrix=sp.csr_matrix((n, 0)), targets=unl, kind="unlabeled"
        )
    leaves = _all_leaves(forest, domain)
    counted = _counted_trees(forest, domain)

    labeled_mask = np.zeros(n, dtype=bool)
    labeled_mask[labeled] = True
    row_to_pos = np.full(n, -1, dtype=np.int64)
    row_to_pos[labeled] = np.arange(labeled.size)
    query_rows = np.arange(n, dtype=np.int64)

    total = None
    for t in range(n_trees):
        inbag_t = forest.inbag[t]
        leaf_train = forest.train_leaves[:, t]
        in_pos = np.flatnonzero(inbag_t > 0)
        bag_w = inbag_t[in_pos].astype(np.float64)
        bag_leaf = leaf_train[in_pos]
        n_leaves = forest.trees[t].n_leaves
        mass = np.bincount(bag_leaf, weights=bag_w, minlength=n_leaves)

        counted_q = ~labeled_mask | (labeled_mask & (inbag_t[row_to_pos.clip(0)] == 0))
        q_rows = query_rows[counted_q]
        q_leaf = leaves[q_rows, t]
        u_leaf = leaves[unl, t]

        ia, ib = _group_join(q_leaf, u_leaf)
        if ia.size:
            total = _merge_tree(
                total, q_rows[ia], ib, 1.0 / mass[q_leaf[ia]], (n, n_unl)
            )

    matrix = _divide_rows(total, counted, n, n_unl)
    return DirectedProximity(matrix=matrix, targets=unl, kind="unlabeled")


def assemble_intra(
    pl: DirectedProximity, pu: DirectedProximity, domain: LabeledDomain
) -> AffinityMatrix:
    """Fuse directed proximities into one symmetric intra-domain affinity.

    The unified query-to-sample matrix Q places labeled-target proximities
    in labeled columns and unlabeled-target proximities in unlabeled
    columns; the result is W = (Q + Q^T) / 2.
    """
    if pl.kind != "labeled" or pu.kind != "unlabeled":
        raise DataValidationError("assemble_intra expects (labeled, unlabeled) proximities")
    n = domain.n
    if pl.matrix.shape[0] != n or pu.matrix.shape[0] != n:
        raise DataValidationError("proximity row count does not match domain size")

    parts = []
    for directed in (pl, pu):
        coo = directed.matrix.tocoo()
        parts.append((coo.row, directed.targets[coo.col], coo.data))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    data = np.concatenate([p[2] for p in parts])
    q = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    w = (q + q.T) * 0.5
    w.sort_indices()
    return AffinityMatrix(w)
