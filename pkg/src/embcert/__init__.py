"""Reliability scoring for black-box contrastive embeddings.

Fits density/consistency models to training embeddings, scores test samples
with variation-, density-, and classifier-based uncertainty measures, and
evaluates every measure via AUROC against aleatoric, epistemic, and overall
ground-truth definitions.
"""

__version__ = "0.1.0"

from .core import (
    AugmentedBatch,
    DownstreamRecord,
    EmbeddingSet,
    EvalInstance,
    FitMeta,
    GmmModel,
    Measure,
    Notion,
    Orientation,
    ScoreVector,
    ValidationError,
)
from .evaluation import (
    DatasetInputs,
    EvalSetup,
    SweepGrid,
    SweepInputs,
    auroc,
    build_labels,
    evaluate,
    sweep,
)
from .gmm import GmmFitConfig, bic, fit_gmm, log_density
from .neighbors import ConsistencyConfig, consistency_scores, filter_consistent, knn_indices
from .scorers import ScorerSpec, delta, density_score, entropy_score, max_score, score_dataset
from .synth import SynthConfig, SynthWorld, generate_world, sample_vmf

__all__ = [
    "__version__",
    "AugmentedBatch",
    "ConsistencyConfig",
    "DatasetInputs",
    "DownstreamRecord",
    "EmbeddingSet",
    "EvalInstance",
    "EvalSetup",
    "FitMeta",
    "GmmFitConfig",
    "GmmModel",
    "Measure",
    "Notion",
    "Orientation",
    "ScoreVector",
    "ScorerSpec",
    "SweepGrid",
    "SweepInputs",
    "SynthConfig",
    "SynthWorld",
    "ValidationError",
    "auroc",
    "bic",
    "build_labels",
    "consistency_scores",
    "delta",
    "density_score",
    "entropy_score",
    "evaluate",
    "filter_consistent",
    "fit_gmm",
    "generate_world",
    "knn_indices",
    "log_density",
    "max_score",
    "sample_vmf",
    "score_dataset",
    "sweep",
]
