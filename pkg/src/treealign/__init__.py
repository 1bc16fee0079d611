"""treealign: label-supervised alignment of heterogeneous tabular datasets.

The package aligns two domains that share a label vocabulary but not a
feature space.  Per-domain geometry is learned with semi-supervised
random-forest affinities, domains are matched through hierarchical
bijective optimal transport over class-semantic profiles, and the fused
affinity graph is embedded with landmark diffusion for visualization and
downstream evaluation.
"""

from .core import (
    UNLABELED,
    AffinityMatrix,
    Coupling,
    DataValidationError,
    LabeledDomain,
    RngConfig,
    assemble_joint,
    load_domain,
    mask_labels,
)
from .embed import EmbedParams, landmark_embed
from .forest import Forest, ForestParams, train_forest
from .fusion import fuse, propagate
from .pipeline import AlignmentResult, align_domains
from .proximity import assemble_intra, rfgap_labeled, rfgap_unlabeled
from .semantic import SemanticCost, SemanticProfile, normalize_profiles, semantic_profiles
from .transport import HiRefParams, exact_assignment, hiref

__all__ = [
    "UNLABELED",
    "AffinityMatrix",
    "AlignmentResult",
    "Coupling",
    "DataValidationError",
    "EmbedParams",
    "Forest",
    "ForestParams",
    "HiRefParams",
    "LabeledDomain",
    "RngConfig",
    "SemanticCost",
    "SemanticProfile",
    "align_domains",
    "assemble_intra",
    "assemble_joint",
    "exact_assignment",
    "fuse",
    "hiref",
    "landmark_embed",
    "load_domain",
    "mask_labels",
    "normalize_profiles",
    "propagate",
    "rfgap_labeled",
    "rfgap_unlabeled",
    "semantic_profiles",
    "train_forest",
]

__version__ = "0.1.0"
