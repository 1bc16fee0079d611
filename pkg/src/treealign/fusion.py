"""Fusing two intra-domain affinity graphs through a coupling.

The cross-domain block propagates affinity along matched pairs from both
sides: W_AB = (W_A T + T W_B) / 2, where T is the coupling's permutation
matrix.  Because T is a permutation, both products are pure row/column
reindexings; no general matrix multiplication is ever performed.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import AffinityMatrix, Coupling, DataValidationError, assemble_joint


def propagate(w_a: AffinityMatrix, w_b: AffinityMatrix, coupling: Coupling) -> sp.csr_matrix:
    """Cross-domain affinity block, shape (n_A, n_B)."""
    if w_a.size != coupling.size or w_b.size != coupling.size:
        raise DataValidationError(
            f"coupling size {coupling.size} does not match affinities "
            f"({w_a.size}, {w_b.size})"
        )
    fwd = coupling.forward
    inv = coupling.inverse().forward
    # (W_A T)[i, j] = W_A[i, inv[j]] — column reindex.
    left = w_a.matrix[:, inv]
    # (T W_B)[i, j] = W_B[fwd[i], j] — row reindex.
    right = w_b.matrix[fwd, :]
    cross = left + right
    cross.data *= 0.5
    cross.sum_duplicates()
    cross.sort_indices()
    return cross


def fuse(w_a: AffinityMatrix, w_b: AffinityMatrix, coupling: Coupling) -> AffinityMatrix:
    """Joint affinity over the concatenated domains.

    Returns the (n_A + n_B) square block matrix
    [[W_A, W_AB], [W_AB^T, W_B]] with W_AB from :func:`propagate`.
    """
    cross = propagate(w_a, w_b, coupling)
    return assemble_joint(w_a, w_b, cross)
