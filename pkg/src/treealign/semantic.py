"""Class-semantic profiles: affinity mass toward each class, per sample.

A profile row summarizes how strongly a sample connects to each label
class inside its own domain, reweighted by inverse class frequency so
that rare classes are not drowned out.  After l2 normalization the
profiles of both domains live on the same unit sphere regardless of
their original feature spaces, which is what makes cross-domain
transport costs meaningful.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import AffinityMatrix, DataValidationError, LabeledDomain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SemanticProfile:
    """Per-sample class profile matrix, shape (n, class_count)."""

    matrix: np.ndarray
    normalized: bool
    zero_rows: int = 0

    def __post_init__(self):
        M = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
            raise DataValidationError(f"profile matrix must be 2-D, got shape {M.shape}")
        if not np.isfinite(M).all():
            raise DataValidationError("profile matrix contains non-finite values")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def class_count(self) -> int:
        return self.matrix.shape[1]


def semantic_profiles(w: AffinityMatrix, domain: LabeledDomain) -> SemanticProfile:
    """Raw (unnormalized) class profiles S[i, c] from an intra-domain affinity.

    S[i, c] is the total affinity of sample i toward labeled samples of
    class c, divided by the class prior p_c = n_c / n_labeled.
    """
    if w.size != domain.n:
        raise DataValidationError(
            f"affinity size {w.size} does not match domain size {domain.n}"
        )
    labeled = domain.labeled_indices
    if labeled.size == 0:
        raise DataValidationError("semantic profiles require labeled samples")
    y = domain.labels[labeled]
    C = domain.class_count
    counts = np.bincount(y, minlength=C).astype(np.float64)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise DataValidationError(f"class {missing} has no labeled samples")

    indicator = np.zeros((labeled.size, C), dtype=np.float64)
    indicator[np.arange(labeled.size), y] = 1.0
    mass = w.matrix[:, labeled] @ indicator  # (n, C) affinity mass per class
    mass *= labeled.size / counts  # divide by class prior n_c / n_labeled
    return SemanticProfile(matrix=mass, normalized=False)


def normalize_profiles(profile: SemanticProfile) -> SemanticProfile:
    """l2-normalize each profile row onto the unit sphere.

    Rows with zero norm (samples with no affinity to any labeled sample)
    are replaced by the uniform direction 1/sqrt(C) and counted in
    ``zero_rows``.
    """
    M = np.array(profile.matrix, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", M, M))
    zero = norms == 0.0
    n_zero = int(zero.sum())
    if n_zero:
        logger.warning(
            "%d of %d profile rows have zero norm; using uniform direction",
            n_zero,
            M.shape[0],
        )
        M[zero] = 1.0 / np.sqrt(M.shape[1])
        norms[zero] = 1.0
    M /= norms[:, None]
    return SemanticProfile(matrix=M, normalized=True, zero_rows=n_zero)


def semantic_cost(a: SemanticProfile, i: int, b: SemanticProfile, j: int) -> float:
    """Squared Euclidean cost between two normalized profile rows.

    For unit vectors this equals 2 - 2 <a_i, b_j>.
    """
    if not (a.normalized and b.normalized):
        raise DataValidationError("semantic costs require normalized profiles")
    if a.class_count != b.class_count:
        raise DataValidationError("profiles have different class counts")
    return 2.0 - 2.0 * float(a.matrix[i] @ b.matrix[j])


class SemanticCost:
    """Lazy pairwise-cost operator c(i, j) = 2 - 2 <a_i, b_j>.

    Never materializes the full n x m matrix unless asked; transport
    routines request rectangular blocks on demand.
    """

    def __init__(self, source: SemanticProfile, target: SemanticProfile):
        if not (source.normalized and target.normalized):
            raise DataValidationError("semantic costs require normalized profiles")
        if source.class_count != target.class_count:
            raise DataValidationError("profiles have different class counts")
        self._a = source.matrix
        self._b = target.matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape[0], self._b.shape[0]

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Dense cost block for the given row and column index arrays."""
        return 2.0 - 2.0 * (self._a[rows] @ self._b[cols].T)

    def full(self) -> np.ndarray:
        return 2.0 - 2.0 * (self._a @ self._b.T)

    def coupling_cost(self, forward: np.ndarray) -> float:
        """Total cost sum_i c(i, forward[i]) of a bijective matching."""
        dots = np.einsum("ij,ij->i", self._a, self._b[forward])
        return float(np.sum(2.0 - 2.0 * dots))
