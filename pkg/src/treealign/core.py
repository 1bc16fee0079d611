"""Shared data containers, input loading, and seeded randomness.

Everything downstream (forests, transport, embedding, metrics) consumes
the types defined here.  Arrays inside the containers are frozen
(write-protected views) so that a domain or affinity object can be shared
between pipeline stages without defensive copies.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UNLABELED = -1

# Symmetry tolerance for affinity containers.  Construction paths in this
# package produce exactly symmetric matrices; the tolerance only forgives
# float noise in externally supplied ones.
SYMMETRY_TOL = 1e-12

# Cell contents treated as missing when reading CSV feature columns.
MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "na", "n/a", "nan", "NaN"})


class DataValidationError(ValueError):
    """An input violated a documented contract (shape, range, or encoding)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a usable result."""


def _fold_path_word(part) -> int:
    """Map one stream-path component to a uint32 word for SeedSequence."""
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path integers must be non-negative")
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream path parts must be int or str, got {type(part)!r}")


@dataclass(frozen=True)
class RngConfig:
    """Root seed plus a derivation path for reproducible substreams.

    Every stochastic component pulls its own named generator via
    :meth:`stream`; the generator depends only on ``(seed, path)``, never on
    call order or thread scheduling, so pipelines replay bit-identically.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)):
            raise DataValidationError("seed must be an integer")
        if not 0 <= int(self.seed) < 2**64:
            raise DataValidationError("seed must fit in 64 bits")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *parts) -> "RngConfig":
        """A new config whose streams are disjoint from this one's."""
        extra = tuple(_fold_path_word(p) for p in parts)
        return RngConfig(self.seed, self.path + extra)

    def stream(self, *parts) -> np.random.Generator:
        """Named generator; identical across runs and thread counts."""
        key = self.path + tuple(_fold_path_word(p) for p in parts)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledDomain:
    """One dataset: a feature matrix plus (partially observed) labels.

    ``labels[i]`` is either a class id in ``[0, class_count)`` or
    ``UNLABELED`` (-1).  Features must be finite float64.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "domain"

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataValidationError(f"features must be 2-D and non-empty, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataValidationError(
                f"labels shape {y.shape} does not match {X.shape[0]} samples"
            )
        if not np.isfinite(X).all():
            raise DataValidationError("features contain non-finite values")
        if self.class_count < 1:
            raise DataValidationError("class_count must be >= 1")
        if y.min(initial=0) < UNLABELED or y.max(initial=0) >= self.class_count:
            raise DataValidationError(
                f"labels must lie in {{-1}} ∪ [0, {self.class_count})"
            )
        object.__setattr__(self, "features", _freeze(X))
        object.__setattr__(self, "labels", _freeze(y))
        object.__setattr__(self, "class_count", int(self.class_count))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == UNLABELED)

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def with_labels(self, labels: np.ndarray, name: str | None = None) -> "LabeledDomain":
        """Same features, different label vector (used for masking/splits)."""
        return LabeledDomain(self.features, labels, self.class_count,
                             name if name is not None else self.name)


class AffinityMatrix:
    """Square, symmetric, non-negative sparse affinity matrix (CSR)."""

    def __init__(self, matrix, *, tol: float = SYMMETRY_TOL):
        M = sp.csr_matrix(matrix, dtype=np.float64)
        M.sum_duplicates()
        M.sort_indices()
        M.eliminate_zeros()
        if M.shape[0] != M.shape[1]:
            raise DataValidationError(f"affinity matrix must be square, got {M.shape}")
        if M.nnz and not np.isfinite(M.data).all():
            raise DataValidationError("affinity matrix contains non-finite entries")
        if M.nnz and M.data.min() < 0.0:
            raise DataValidationError("affinity matrix contains negative entries")
        asym = abs(M - M.T)
        if asym.nnz and asym.data.max() > tol:
            raise DataValidationError(
                f"affinity matrix is asymmetric beyond tolerance {tol:g}"
            )
        M.data.setflags(write=False)
        self._matrix = M

    @classmethod
    def _from_parts(cls, matrix: sp.csr_matrix) -> "AffinityMatrix":
        """Wrap a CSR whose invariants hold by construction.

        Assembly routines that paste already-validated symmetric blocks
        into a new symmetric matrix use this to skip the O(nnz)
        re-validation, whose transpose-and-subtract check would dominate
        the pipeline's memory high-water mark.  Callers must guarantee
        canonical layout, symmetry, and non-negative finite data.
        """
        obj = cls.__new__(cls)
        matrix.has_sorted_indices = True
        matrix.has_canonical_format = True
        matrix.data.setflags(write=False)
        obj._matrix = matrix
        return obj

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    @property
    def size(self) -> int:
        return self._matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self._matrix.nnz

    def toarray(self) -> np.ndarray:
        return self._matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._matrix.sum(axis=1)).ravel()

    def __repr__(self):
        return f"AffinityMatrix(size={self.size}, nnz={self.nnz})"


@dataclass(frozen=True)
class Coupling:
    """Bijective sample-level matching between two equal-sized domains.

    ``forward[i] = j`` matches sample ``i`` of the source to sample ``j``
    of the target; ``forward`` must be a permutation of ``0..n-1``.
    """

    forward: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(np.asarray(self.forward, dtype=np.int64))
        if f.ndim != 1 or f.size < 1:
            raise DataValidationError("coupling must be a non-empty 1-D index array")
        seen = np.zeros(f.size, dtype=bool)
        if f.min() < 0 or f.max() >= f.size:
            raise DataValidationError("coupling indices out of range")
        seen[f] = True
        if not seen.all():
            raise DataValidationError("coupling is not a permutation")
        object.__setattr__(self, "forward", _freeze(f))

    @property
    def size(self) -> int:
        return self.forward.size

    def inverse(self) -> "Coupling":
        inv = np.empty(self.size, dtype=np.int64)
        inv[self.forward] = np.arange(self.size, dtype=np.int64)
        return Coupling(inv)

    def to_matrix(self) -> sp.csr_matrix:
        """The coupling as a sparse permutation matrix T with T[i, forward[i]] = 1."""
        n = self.size
        return sp.csr_matrix(
            (np.ones(n), (np.arange(n), self.forward)), shape=(n, n)
        )

    def fixed_point_fraction(self) -> float:
        return float(np.mean(self.forward == np.arange(self.size)))


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def _try_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def load_domain(
    path,
    label_column: str,
    *,
    mask_fraction: float = 0.0,
    rng: RngConfig | None = None,
    name: str | None = None,
) -> LabeledDomain:
    """Read a CSV file with a header row into a :class:`LabeledDomain`.

    Column typing is inferred: a feature column is numeric when every
    non-missing cell parses as a finite float, otherwise categorical
    (integer-encoded by first appearance among kept rows).  Rows with a
    missing feature cell are dropped.  An empty label cell marks the row
    as unlabeled; any other missing token in the label drops the row.
    Class ids are assigned by sorting the distinct label values (numeric
    sort when every label parses as a number, lexicographic otherwise).

    ``mask_fraction`` additionally hides that fraction of the observed
    labels via :func:`mask_labels` using ``rng``.
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataValidationError(f"{path}: need a header row and at least one data row")
    header, body = rows[0], rows[1:]
    if label_column not in header:
        raise DataValidationError(
            f"{path}: label column {label_column!r} not found in header {header}"
        )
    label_idx = header.index(label_column)
    feat_idx = [i for i in range(len(header)) if i != label_idx]
    if not feat_idx:
        raise DataValidationError(f"{path}: no feature columns besides the label")
    width = len(header)
    for r, row in enumerate(body):
        if len(row) != width:
            raise DataValidationError(
                f"{path}: row {r + 2} has {len(row)} cells, expected {width}"
            )

    cells = [[c.strip() for c in row] for row in body]

    # Pass 1: column typing from non-missing cells.
    numeric_col: dict[int, bool] = {}
    for j in feat_idx:
        vals = [row[j] for row in cells if row[j] not in MISSING_TOKENS]
        numeric_col[j] = bool(vals) and all(_try_float(v) is not None for v in vals)

    # Pass 2: keep rows with complete features and a usable label cell.
    kept: list[list[str]] = []
    for row in cells:
        ok = True
        for j in feat_idx:
            cell = row[j]
            if cell in MISSING_TOKENS:
                ok = False
                break
            if numeric_col[j] and not np.isfinite(_try_float(cell)):
                ok = False
                break
        lab = row[label_idx]
        if lab in MISSING_TOKENS and lab != "":
            ok = False  # explicit missing marker in the label drops the row
        if ok:
            kept.append(row)
    if not kept:
        raise DataValidationError(f"{path}: no rows survive missing-value removal")

    # Labels: empty cell -> unlabeled; class ids by sorted distinct values.
    raw_labels = [row[label_idx] for row in kept]
    observed = sorted({v for v in raw_labels if v != ""})
    if not observed:
        raise DataValidationError(f"{path}: every row is unlabeled")
    if all(_try_float(v) is not None for v in observed):
        observed.sort(key=float)
    class_of = {v: c for c, v in enumerate(observed)}
    labels = np.array(
        [class_of[v] if v != "" else UNLABELED for v in raw_labels], dtype=np.int64
    )

    # Features: numeric parse or first-appearance categorical codes.
    X = np.empty((len(kept), len(feat_idx)), dtype=np.float64)
    for out_j, j in enumerate(feat_idx):
        if numeric_col[j]:
            X[:, out_j] = [float(row[j]) for row in kept]
        else:
            codes: dict[str, int] = {}
            for row in kept:
                codes.setdefault(row[j], len(codes))
            X[:, out_j] = [codes[row[j]] for row in kept]

    domain = LabeledDomain(X, labels, len(observed), name or path.stem)
    if mask_fraction > 0.0:
        if rng is None:
            raise DataValidationError("mask_fraction > 0 requires an RngConfig")
        domain = mask_labels(domain, mask_fraction, rng.stream("mask", domain.name))
    return domain


def mask_labels(
    domain: LabeledDomain, fraction: float, rng: np.random.Generator
) -> LabeledDomain:
    """Hide a stratified random fraction of the observed labels.

    The total number of hidden labels is ``round(fraction * n_labeled)``,
    allocated across classes by largest remainder, with each class capped
    so that at least one labeled sample survives.
    """
    if not 0.0 <= fraction < 1.0:
        raise DataValidationError("mask fraction must lie in [0, 1)")
    labeled = domain.labeled_indices
    n_lab = labeled.size
    if fraction == 0.0 or n_lab == 0:
        return domain
    y = domain.labels
    classes = np.arange(domain.class_count)
    counts = np.array([np.sum(y[labeled] == c) for c in classes])
    present = classes[counts > 0]
    target_total = int(round(fraction * n_lab))
    caps = np.maximum(counts - 1, 0)
    target_total = min(target_total, int(caps.sum()))

    ideal = fraction * counts.astype(np.float64)
    quota = np.minimum(np.floor(ideal).astype(np.int64), caps)
    deficit = target_total - int(quota.sum())
    if deficit > 0:
        # Largest fractional remainder first; ties broken by class id.
        remainder = ideal - np.floor(ideal)
        order = np.lexsort((classes, -remainder))
        pos = 0
        while deficit > 0:
            c = order[pos % len(order)]
            if quota[c] < caps[c]:
                quota[c] += 1
                deficit -= 1
            pos += 1
            if pos > 10 * len(order) * (1 + target_total):
                raise NumericalError("mask allocation failed to converge")

    new_labels = np.array(y, dtype=np.int64)
    for c in present:
        q = int(quota[c])
        if q <= 0:
            continue
        members = np.flatnonzero(y == c)
        hide = rng.choice(members, size=q, replace=False)
        new_labels[hide] = UNLABELED
    return domain.with_labels(new_labels)


def _paste_rows(indptr, indices, data, block: sp.csr_matrix, row_starts, col_offset):
    """Copy a CSR block's rows into the joint arrays at per-row offsets.

    ``row_starts[i]`` is where row i of the block begins in ``indices``;
    entries land contiguously, so destination positions are the block's
    own positions shifted per row.
    """
    lengths = np.diff(block.indptr)
    shift = row_starts - block.indptr[:-1]
    dest = np.arange(block.nnz, dtype=np.int64) + np.repeat(shift, lengths)
    indices[dest] = block.indices + col_offset
    data[dest] = block.data


def assemble_joint(
    w_a: AffinityMatrix, w_b: AffinityMatrix, w_ab: sp.spmatrix
) -> AffinityMatrix:
    """Stack two intra-domain affinities and a cross block into one graph.

    Returns the symmetric block matrix ``[[W_A, W_AB], [W_AB^T, W_B]]``.
    The blocks are pasted row by row straight into one CSR buffer; within
    a row the left block's columns all precede the right block's, so the
    result is canonical without a sort or a COO detour.
    """
    if sp.issparse(w_ab) and w_ab.format == "csr" and w_ab.dtype == np.float64:
        cross = w_ab
        cross.sum_duplicates()
        cross.sort_indices()
    else:
        cross = sp.csr_matrix(w_ab, dtype=np.float64)
        cross.sum_duplicates()
    if cross.nnz and not cross.data.all():
        cross = cross.copy()
        cross.eliminate_zeros()
    if cross.shape != (w_a.size, w_b.size):
        raise DataValidationError(
            f"cross block shape {cross.shape} does not match ({w_a.size}, {w_b.size})"
        )
    if cross.nnz and (not np.isfinite(cross.data).all() or cross.data.min() < 0.0):
        raise DataValidationError("cross block must be finite and non-negative")

    a, b = w_a.matrix, w_b.matrix
    cross_t = cross.T.tocsr()
    cross_t.sort_indices()
    n_a, n_b = w_a.size, w_b.size
    total = a.nnz + b.nnz + 2 * cross.nnz
    idx_dtype = np.int64 if max(total, n_a + n_b) > np.iinfo(np.int32).max else np.int32

    indptr = np.empty(n_a + n_b + 1, dtype=np.int64)
    indptr[0] = 0
    np.cumsum(np.diff(a.indptr) + np.diff(cross.indptr), out=indptr[1 : n_a + 1])
    indptr[n_a + 1 :] = indptr[n_a] + np.cumsum(
        np.diff(cross_t.indptr) + np.diff(b.indptr)
    )
    indices = np.empty(total, dtype=idx_dtype)
    data = np.empty(total, dtype=np.float64)

    top = indptr[:n_a]
    _paste_rows(indptr, indices, data, a, top, 0)
    _paste_rows(indptr, indices, data, cross, top + np.diff(a.indptr), n_a)
    bottom = indptr[n_a:-1]
    _paste_rows(indptr, indices, data, cross_t, bottom, 0)
    _paste_rows(indptr, indices, data, b, bottom + np.diff(cross_t.indptr), n_a)

    joint = sp.csr_matrix(
        (data, indices, indptr.astype(idx_dtype, copy=False)),
        shape=(n_a + n_b, n_a + n_b),
    )
    # a and b are validated symmetric blocks and the cross block is pasted
    # together with its own transpose, so the result is symmetric, sorted,
    # and non-negative by construction.
    return AffinityMatrix._from_parts(joint)
