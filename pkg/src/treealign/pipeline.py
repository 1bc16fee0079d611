"""End-to-end alignment orchestration shared by the CLI and the tests.

``align_domains`` runs forest → proximity → semantic → transport →
fusion and returns every intermediate artifact plus per-stage wall
times; ``embed_joint`` adds the embedding stage.  All randomness derives
from one :class:`~treealign.core.RngConfig`, and both domains share the
same forest stream so that identical inputs yield identical forests.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bench import subsample_larger
from .core import AffinityMatrix, Coupling, DataValidationError, LabeledDomain, RngConfig
from .embed import EmbedParams, landmark_embed
from .forest import Forest, ForestParams, train_forest
from .fusion import fuse
from .proximity import assemble_intra, rfgap_labeled, rfgap_unlabeled
from .semantic import SemanticCost, SemanticProfile, normalize_profiles, semantic_profiles
from .transport import DEFAULT_EXACT_CAP, HiRefParams, exact_assignment, hiref

logger = logging.getLogger(__name__)


@dataclass
class AlignmentResult:
    """Everything produced by one alignment run."""

    domain_a: LabeledDomain
    domain_b: LabeledDomain
    forest_a: Forest
    forest_b: Forest
    w_a: AffinityMatrix
    w_b: AffinityMatrix
    profile_a: SemanticProfile
    profile_b: SemanticProfile
    coupling: Coupling
    transport_cost: float
    w_joint: AffinityMatrix
    method: str
    timings: dict = field(default_factory=dict)


def _intra_affinity(forest: Forest, domain: LabeledDomain) -> AffinityMatrix:
    pl = rfgap_labeled(forest, domain)
    pu = rfgap_unlabeled(forest, domain)
    return assemble_intra(pl, pu, domain)


def align_domains(
    domain_a: LabeledDomain,
    domain_b: LabeledDomain,
    *,
    forest_params: ForestParams | None = None,
    hiref_params: HiRefParams | None = None,
    rng: RngConfig,
    exact: bool = False,
    exact_cap: int = DEFAULT_EXACT_CAP,
    subsample: bool = False,
    threads: int = 1,
) -> AlignmentResult:
    """Align two domains into a fused joint affinity graph."""
    if domain_a.class_count != domain_b.class_count:
        raise DataValidationError(
            f"domains disagree on class count "
            f"({domain_a.class_count} vs {domain_b.class_count})"
        )
    if domain_a.n != domain_b.n:
        if not subsample:
            raise DataValidationError(
                f"domain sizes differ ({domain_a.n} vs {domain_b.n}); the coupling "
                "is bijective, so subsample the larger domain (subsample=True / "
                "--subsample) or balance the inputs yourself"
            )
        domain_a, domain_b = subsample_larger(domain_a, domain_b, rng.child("balance"))

    timings: dict = {}
    t0 = time.perf_counter()
    forest_rng = rng.child("forest")
    forest_a = train_forest(domain_a, forest_params, forest_rng, threads=threads)
    forest_b = train_forest(domain_b, forest_params, forest_rng, threads=threads)
    timings["forest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    w_a = _intra_affinity(forest_a, domain_a)
    w_b = _intra_affinity(forest_b, domain_b)
    timings["proximity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    profile_a = normalize_profiles(semantic_profiles(w_a, domain_a))
    profile_b = normalize_profiles(semantic_profiles(w_b, domain_b))
    timings["semantic"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cost = SemanticCost(profile_a, profile_b)
    if exact:
        coupling, transport_cost = exact_assignment(cost, cap=exact_cap)
        method = "exact"
    else:
        coupling = hiref(profile_a, profile_b, hiref_params, rng.child("transport"))
        transport_cost = cost.coupling_cost(coupling.forward)
        method = "hiref"
    timings["transport"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    w_joint = fuse(w_a, w_b, coupling)
    timings["fusion"] = time.perf_counter() - t0

    for stage, seconds in timings.items():
        logger.info("stage=%s seconds=%.3f", stage, seconds)
    return AlignmentResult(
        domain_a=domain_a,
        domain_b=domain_b,
        forest_a=forest_a,
        forest_b=forest_b,
        w_a=w_a,
        w_b=w_b,
        profile_a=profile_a,
        profile_b=profile_b,
        coupling=coupling,
        transport_cost=transport_cost,
        w_joint=w_joint,
        method=method,
        timings=timings,
    )


def embed_joint(
    result: AlignmentResult,
    params: EmbedParams | None = None,
    rng: RngConfig | None = None,
) -> np.ndarray:
    """Embed the fused graph; rows follow [domain A; domain B] order."""
    if rng is None:
        raise DataValidationError("embed_joint requires an RngConfig")
    t0 = time.perf_counter()
    coords = landmark_embed(result.w_joint, params, rng.child("embed"))
    result.timings["embed"] = time.perf_counter() - t0
    logger.info("stage=embed seconds=%.3f", result.timings["embed"])
    return coords
