"""Synthetic evaluation scenarios: feature splits, batch effects, subsampling.

Every generator takes an :class:`~treealign.core.RngConfig` and is pure:
the same domain, spec, and seed always produce the same scenario.  Splits
keep rows in place, so the identity permutation is the ground-truth
correspondence for FOSCTTM and friends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import UNLABELED, DataValidationError, LabeledDomain, RngConfig
from .forest import ForestParams, train_forest

SPLIT_KINDS = ("random", "importance", "alternating", "add_noise", "distort", "rotate")


@dataclass(frozen=True)
class SplitSpec:
    """How to split one dataset into two pseudo-domains.

    ``noise_ratio`` applies to add_noise (noise columns per signal
    column); ``sigma`` applies to distort (noise scale in units of each
    feature's standard deviation).
    """

    kind: str
    seed: int = 0
    noise_ratio: int = 10
    sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise DataValidationError(
                f"unknown split kind {self.kind!r}; expected one of {SPLIT_KINDS}"
            )
        if self.noise_ratio < 1:
            raise DataValidationError("noise_ratio must be at least 1")
        if self.sigma < 0.0:
            raise DataValidationError("sigma must be non-negative")


def _feature_std(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0)
    return np.where(std > 0.0, std, 1.0)


def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean(axis=0)) / _feature_std(x)


def split(domain: LabeledDomain, spec: SplitSpec, rng: RngConfig):
    """Split a domain into (A, B, correspondence).

    Rows are preserved in both outputs, so the correspondence is the
    identity permutation.  Partition kinds (random / importance /
    alternating) need at least two features.
    """
    base = rng.child("split", spec.kind, spec.seed)
    x = domain.features
    d = domain.dim
    if spec.kind in ("random", "importance", "alternating") and d < 2:
        raise DataValidationError(f"{spec.kind} split needs at least 2 features, got {d}")

    if spec.kind == "random":
        gen = base.stream("assign")
        while True:
            side = gen.integers(0, 2, size=d)
            if 0 < side.sum() < d:
                break
        feats_a = np.flatnonzero(side == 0)
        feats_b = np.flatnonzero(side == 1)
        xa, xb = x[:, feats_a], x[:, feats_b]
    elif spec.kind in ("importance", "alternating"):
        forest = train_forest(domain, ForestParams(), base.child("rank_forest"))
        ranked = np.argsort(-forest.importances, kind="stable")
        if spec.kind == "importance":
            top = int(np.ceil(d / 2))
            feats_a = np.sort(ranked[:top])
            feats_b = np.sort(ranked[top:])
        else:
            feats_a = np.sort(ranked[0::2])
            feats_b = np.sort(ranked[1::2])
        xa, xb = x[:, feats_a], x[:, feats_b]
    elif spec.kind == "add_noise":
        gen = base.stream("noise_columns")
        noise = gen.standard_normal(size=(domain.n, spec.noise_ratio * d))
        xa = x
        xb = np.hstack([_standardize(x), noise])
    elif spec.kind == "distort":
        xa = x
        if spec.sigma == 0.0:
            xb = np.array(x)
        else:
            gen = base.stream("distort_noise")
            xb = x + gen.standard_normal(size=x.shape) * (spec.sigma * _feature_std(x))
    else:  # rotate
        gen = base.stream("rotation")
        q, r = np.linalg.qr(gen.standard_normal(size=(d, d)))
        q = q * np.sign(np.diag(r))[None, :]
        xa = x
        xb = x @ q

    dom_a = LabeledDomain(xa, domain.labels, domain.class_count, f"{domain.name}_A")
    dom_b = LabeledDomain(xb, domain.labels, domain.class_count, f"{domain.name}_B")
    return dom_a, dom_b, np.arange(domain.n, dtype=np.int64)


def simulate_batches(
    domain: LabeledDomain,
    noise_sigma: float,
    dropout_p: float,
    rng: RngConfig,
):
    """Split samples into two batches and perturb the second one.

    The split is a stratified 50/50 (the first batch takes the ceiling
    within each class).  Batch 2 gets additive Gaussian noise scaled per
    feature by noise_sigma times the feature's standard deviation, then
    each entry is independently zeroed with probability dropout_p.  Both
    perturbations are skipped entirely at parameter 0, so the (0, 0)
    scenario reproduces the original rows exactly.
    """
    if not 0.0 <= noise_sigma <= 1.0:
        raise DataValidationError("noise_sigma must lie in [0, 1]")
    if not 0.0 <= dropout_p <= 0.9:
        raise DataValidationError("dropout_p must lie in [0, 0.9]")
    y = domain.labels
    strata = [domain.class_indices(c) for c in range(domain.class_count)]
    for c, members in enumerate(strata):
        if 0 < members.size < 2:
            raise DataValidationError(
                f"simulate_batches needs at least 2 samples per class; class {c} has 1"
            )
    unl = domain.unlabeled_indices
    if unl.size:
        strata.append(unl)

    gen = rng.stream("batches", "assign")
    one, two = [], []
    for members in strata:
        perm = gen.permutation(members)
        half = int(np.ceil(members.size / 2))
        one.append(perm[:half])
        two.append(perm[half:])
    idx1 = np.sort(np.concatenate(one))
    idx2 = np.sort(np.concatenate([p for p in two if p.size]))
    if idx2.size == 0:
        raise DataValidationError("second batch is empty; domain too small to split")

    x2 = np.array(domain.features[idx2])
    if noise_sigma > 0.0:
        noise_gen = rng.stream("batches", "noise")
        scale = noise_sigma * _feature_std(domain.features)
        x2 = x2 + noise_gen.standard_normal(size=x2.shape) * scale
    if dropout_p > 0.0:
        drop_gen = rng.stream("batches", "dropout")
        x2 = np.where(drop_gen.random(size=x2.shape) < dropout_p, 0.0, x2)

    batch1 = LabeledDomain(
        domain.features[idx1], y[idx1], domain.class_count, f"{domain.name}_b1"
    )
    batch2 = LabeledDomain(x2, y[idx2], domain.class_count, f"{domain.name}_b2")
    return batch1, batch2


def subsample_larger(dom_a: LabeledDomain, dom_b: LabeledDomain, rng: RngConfig):
    """Downsample the larger domain to the smaller one's size, stratified.

    Per-class keep counts are proportional to the larger domain's class
    distribution (largest-remainder rounding, unlabeled samples forming
    their own stratum); every class that has labeled samples keeps at
    least one.  Equal sizes pass through untouched.
    """
    if dom_a.n == dom_b.n:
        return dom_a, dom_b
    if dom_a.n > dom_b.n:
        return _subsample(dom_a, dom_b.n, rng), dom_b
    return dom_a, _subsample(dom_b, dom_a.n, rng)


def _subsample(domain: LabeledDomain, target: int, rng: RngConfig) -> LabeledDomain:
    strata = [domain.class_indices(c) for c in range(domain.class_count)]
    class_strata = len(strata)
    unl = domain.unlabeled_indices
    if unl.size:
        strata.append(unl)
    sizes = np.array([s.size for s in strata], dtype=np.int64)
    ideal = sizes * (target / domain.n)
    keep = np.floor(ideal).astype(np.int64)
    remainder = ideal - keep
    deficit = target - int(keep.sum())
    order = np.lexsort((np.arange(sizes.size), -remainder))
    pos = 0
    while deficit > 0:
        s = order[pos % sizes.size]
        if keep[s] < sizes[s]:
            keep[s] += 1
            deficit -= 1
        pos += 1
    # Every populated class keeps at least one labeled sample.
    for c in range(class_strata):
        if sizes[c] > 0 and keep[c] == 0:
            donor = int(np.argmax(keep))
            keep[donor] -= 1
            keep[c] = 1

    gen = rng.stream("subsample", domain.name)
    chosen = []
    for s, members in enumerate(strata):
        if keep[s] > 0:
            chosen.append(gen.choice(members, size=int(keep[s]), replace=False))
    idx = np.sort(np.concatenate(chosen))
    return LabeledDomain(
        domain.features[idx], domain.labels[idx], domain.class_count, domain.name
    )


def gaussian_blobs(
    n: int,
    n_classes: int,
    dim: int,
    rng: RngConfig,
    *,
    separation: float = 6.0,
    name: str = "blobs",
) -> LabeledDomain:
    """Fully labeled Gaussian class blobs for synthetic benchmarks."""
    if n < n_classes:
        raise DataValidationError("need at least one sample per class")
    gen = rng.stream("blobs", name)
    centers = gen.standard_normal(size=(n_classes, dim)) * separation
    counts = np.full(n_classes, n // n_classes, dtype=np.int64)
    counts[: n % n_classes] += 1
    labels = np.repeat(np.arange(n_classes), counts)
    x = centers[labels] + gen.standard_normal(size=(n, dim))
    return LabeledDomain(x, labels, n_classes, name)
