"""Low-dimensional embedding of an affinity graph by diffusion potentials.

The affinity matrix is row-normalized into a diffusion operator, powered
to a (possibly auto-selected) scale t, and log-transformed into potential
coordinates whose pairwise distances are embedded with metric MDS.  Above
``landmarks`` samples the operator is compressed onto cluster-aggregated
landmarks first, and non-landmark points are placed by their transition
weights into the landmark embedding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from ._kmeans import lloyd, squared_distances
from .core import AffinityMatrix, DataValidationError, RngConfig

logger = logging.getLogger(__name__)

_TIME_MAX = 64
_TIME_FALLBACK = 8
_ENTROPY_FLAT = 1e-6
_SMACOF_REL_TOL = 1e-10


@dataclass(frozen=True)
class EmbedParams:
    """Embedding knobs.

    ``t=None`` selects the diffusion time automatically from the knee of
    the von Neumann entropy curve.  Problems with at most ``landmarks``
    samples are embedded exactly; larger ones go through landmark
    compression.
    """

    out_dims: int = 2
    t: int | None = None
    landmarks: int = 2000
    mds_iters: int = 100
    eps: float = 1e-7

    def __post_init__(self):
        if self.out_dims < 1:
            raise DataValidationError("out_dims must be positive")
        if self.t is not None and self.t < 1:
            raise DataValidationError("diffusion time must be at least 1")
        if self.landmarks <= self.out_dims:
            raise DataValidationError("landmarks must exceed out_dims")
        if self.mds_iters < 0:
            raise DataValidationError("mds_iters must be non-negative")
        if not self.eps > 0.0:
            raise DataValidationError("eps must be positive")


def diffusion_operator(w: AffinityMatrix) -> sp.csr_matrix:
    """Row-stochastic operator P = D^-1 W.

    Rows with zero affinity mass receive a self-loop equal to the smallest
    positive affinity entry (1.0 if the matrix has none), so every row
    remains a probability distribution.
    """
    m = sp.csr_matrix(w.matrix, copy=True)
    sums = np.asarray(m.sum(axis=1)).ravel()
    dead = np.flatnonzero(sums == 0.0)
    if dead.size:
        loop = float(m.data.min()) if m.nnz else 1.0
        fix = sp.csr_matrix(
            (np.full(dead.size, loop), (dead, dead)), shape=m.shape
        )
        m = m + fix
        sums = np.asarray(m.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / sums)
    p = sp.csr_matrix(inv @ m)
    p.sort_indices()
    return p


def auto_time(p: np.ndarray, t_max: int = _TIME_MAX) -> int:
    """Diffusion time at the knee of the von Neumann entropy curve.

    The entropy of the normalized singular-value spectrum of P^t is
    computed for t = 1..t_max and the time farthest from the chord between
    the endpoints is returned.  Flat curves (range < 1e-6) fall back to 8.
    """
    p = np.asarray(p, dtype=np.float64)
    sigma = np.linalg.svd(p, compute_uv=False)
    sigma = sigma[sigma > 0.0]
    ts = np.arange(1, t_max + 1, dtype=np.float64)
    entropy = np.empty(t_max, dtype=np.float64)
    for i, t in enumerate(ts):
        weights = sigma**t
        weights = weights / weights.sum()
        nz = weights[weights > 0.0]
        entropy[i] = float(-np.sum(nz * np.log(nz)))
    if entropy.max() - entropy.min() < _ENTROPY_FLAT:
        return _TIME_FALLBACK
    # Knee: maximum distance to the chord between the first and last point.
    dh = entropy[-1] - entropy[0]
    dt = ts[-1] - ts[0]
    dist = np.abs(dh * ts - dt * entropy + dt * entropy[0] - dh * ts[0])
    return int(ts[int(np.argmax(dist))])


def potential_distances(
    p_t: np.ndarray, eps: float, col_weights: np.ndarray | None = None
) -> np.ndarray:
    """Pairwise distances between log-potential rows of a powered operator.

    ``col_weights`` marks columns that aggregate several original points
    (landmark mode): entries are divided by their column's weight before
    the log so they estimate per-point transition mass, and the log columns
    are scaled by sqrt(weight) so each aggregate contributes as many
    squared terms as the points it stands for.  With unit weights this
    reduces to the plain potential distance.
    """
    if col_weights is None:
        logp = np.log(p_t + eps)
    else:
        w = np.asarray(col_weights, dtype=np.float64)
        logp = np.log(p_t / w[None, :] + eps) * np.sqrt(w)[None, :]
    d2 = squared_distances(logp, logp)
    d = np.sqrt(d2)
    return (d + d.T) * 0.5  # enforce exact symmetry


def classical_mds(dist: np.ndarray, out_dims: int) -> np.ndarray:
    """Torgerson MDS: eigendecompose the double-centered squared distances.

    Returns all-zero coordinates (with a warning) when the Gram matrix has
    no positive spectrum or the eigensolver fails.
    """
    n = dist.shape[0]
    d2 = dist * dist
    j = np.eye(n) - 1.0 / n
    gram = -0.5 * (j @ d2 @ j)
    gram = (gram + gram.T) * 0.5
    try:
        vals, vecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError:
        logger.warning("MDS eigendecomposition failed; returning zero coordinates")
        return np.zeros((n, out_dims))
    order = np.argsort(vals)[::-1][:out_dims]
    top_vals = vals[order]
    top_vecs = vecs[:, order]
    if not np.any(top_vals > 0.0):
        logger.warning("distance matrix has no positive spectrum; returning zeros")
        return np.zeros((n, out_dims))
    coords = top_vecs * np.sqrt(np.maximum(top_vals, 0.0))[None, :]
    if coords.shape[1] < out_dims:
        pad = np.zeros((n, out_dims - coords.shape[1]))
        coords = np.hstack([coords, pad])
    return coords


def smacof(dist: np.ndarray, init: np.ndarray, iters: int) -> np.ndarray:
    """Refine an MDS layout by iterated Guttman transforms.

    Stops early when relative stress improvement drops below 1e-10.
    """
    n = dist.shape[0]
    x = np.array(init, dtype=np.float64)
    prev_stress = None
    for _ in range(iters):
        d = np.sqrt(squared_distances(x, x))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0.0, dist / np.where(d > 0.0, d, 1.0), 0.0)
        b = -ratio
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(b, -b.sum(axis=1))
        x_new = (b @ x) / n
        stress = float(np.sum((dist - d) ** 2)) / 2.0
        if prev_stress is not None and abs(prev_stress - stress) <= _SMACOF_REL_TOL * max(
            prev_stress, 1.0
        ):
            break
        prev_stress = stress
        x = x_new
    return x


def _embed_dense(
    p: np.ndarray, params: EmbedParams, col_weights: np.ndarray | None = None
) -> np.ndarray:
    t = params.t if params.t is not None else auto_time(p)
    p_t = np.linalg.matrix_power(p, t)
    dist = potential_distances(p_t, params.eps, col_weights)
    init = classical_mds(dist, params.out_dims)
    if not init.any():
        return init
    return smacof(dist, init, params.mds_iters)


def landmark_embed(
    w: AffinityMatrix, params: EmbedParams | None = None, rng: RngConfig | None = None
) -> np.ndarray:
    """Embed an affinity graph; shape (n, out_dims).

    Graphs of at most ``params.landmarks`` nodes are embedded exactly;
    larger graphs are compressed onto cluster landmarks first.
    """
    params = params or EmbedParams()
    if rng is None:
        raise DataValidationError("landmark_embed requires an RngConfig")
    n = w.size
    if n == 1:
        return np.zeros((1, params.out_dims))
    p = diffusion_operator(w)
    if n <= params.landmarks:
        return _embed_dense(p.toarray(), params)

    # Landmark route: compress operator rows, cluster them, aggregate.
    rank = min(64, n - 2)
    gen = rng.stream("embed", "svd")
    v0 = gen.random(n)
    u, s, _ = svds(p, k=rank, v0=v0)
    order = np.argsort(s)[::-1]
    rep = u[:, order] * s[order][None, :]
    labels, _, _ = lloyd(rep, params.landmarks, rng.stream("embed", "kmeans"), iters=30)

    z = sp.csr_matrix(
        (np.ones(n), (np.arange(n), labels)), shape=(n, params.landmarks)
    )
    p_nm = sp.csr_matrix(p @ z)  # (n, M) transitions into landmark clusters
    g = np.asarray((z.T @ p_nm).todense())  # (M, M) aggregated transitions
    row = g.sum(axis=1)
    row[row == 0.0] = 1.0
    p_mm = g / row[:, None]

    sizes = np.bincount(labels, minlength=params.landmarks).astype(np.float64)
    sizes[sizes == 0.0] = 1.0
    y_m = _embed_dense(p_mm, params, col_weights=sizes)
    return np.asarray(p_nm @ y_m)
