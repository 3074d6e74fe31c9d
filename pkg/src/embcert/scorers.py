"""The seven per-sample measures behind one scoring interface.

Density scores stay in log space end to end: the view-ensembled density
(1/l) * sum_i p(z_i) is computed as logsumexp of per-view log-densities minus
log l, because raw m-dimensional Gaussian densities overflow 64-bit floats
once m grows past a few dozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import (
    DENSITY_MEASURES,
    DOWNSTREAM_MEASURES,
    ENSEMBLED_MEASURES,
    FILTERED_MEASURES,
    AugmentedBatch,
    DownstreamRecord,
    EmbeddingSet,
    GmmModel,
    Measure,
    ScoreVector,
    ValidationError,
)
from .gmm import log_density


@dataclass(frozen=True)
class ScorerSpec:
    """A measure plus exactly the resources it needs."""

    measure: Measure
    model: Optional[GmmModel] = None
    requires_batches: bool = field(init=False)
    requires_downstream: bool = field(init=False)

    def __post_init__(self) -> None:
        measure = Measure(self.measure)
        object.__setattr__(self, "measure", measure)
        object.__setattr__(
            self, "requires_batches", measure is Measure.DELTA or measure in ENSEMBLED_MEASURES
        )
        object.__setattr__(self, "requires_downstream", measure in DOWNSTREAM_MEASURES)
        if measure in DENSITY_MEASURES:
            if self.model is None:
                raise ValidationError(f"measure {measure.value} needs a fitted model")
            filtered = self.model.fit_meta.is_filtered()
            if measure in FILTERED_MEASURES and not filtered:
                raise ValidationError(
                    f"measure {measure.value} needs a consistency-filtered model "
                    "(fit_meta carries no k/tau)"
                )
            if measure not in FILTERED_MEASURES and filtered:
                raise ValidationError(
                    f"measure {measure.value} must use an unfiltered model, got one "
                    f"fit at k={self.model.fit_meta.k}, tau={self.model.fit_meta.tau}"
                )
        elif self.model is not None:
            raise ValidationError(f"measure {measure.value} takes no model")


def delta(batch: AugmentedBatch) -> float:
    """Trace of the sample covariance of the views (unbiased, l-1 denominator)."""
    if batch.l < 2:
        raise ValidationError(
            f"delta requires at least 2 views, batch {batch.sample_id!r} has {batch.l}"
        )
    # shifting by view 0 first keeps the computation exact when views coincide
    shifted = batch.views - batch.views[0]
    centered = shifted - shifted.mean(axis=0)
    return float((centered * centered).sum() / (batch.l - 1))


def density_score(model: GmmModel, point_or_views: np.ndarray) -> float:
    """Log-density of a single view, or the log of the view-averaged density.

    A 1-D input is one embedding and yields log p(z); a 2-D input is a stack
    of l views and yields log[(1/l) sum_i p(z_i)] via logsumexp.
    """
    arr = np.asarray(point_or_views, dtype=np.float64)
    if arr.ndim == 1:
        return float(log_density(model, arr[None, :])[0])
    if arr.ndim == 2:
        per_view = log_density(model, arr)
        return float(logsumexp(per_view) - np.log(arr.shape[0]))
    raise ValidationError(f"expected a vector or a views matrix, got shape {arr.shape}")


def entropy_score(rec: DownstreamRecord) -> float:
    """Shannon entropy of the class probabilities, natural log, 0*log 0 = 0."""
    p = rec.class_probs
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum()) + 0.0  # normalizes IEEE -0.0 for the one-hot case


def max_score(rec: DownstreamRecord) -> float:
    return float(rec.class_probs.max())


def _stacked_view_log_densities(
    model: GmmModel, batches: Sequence[AugmentedBatch]
) -> list[np.ndarray]:
    """Per-batch arrays of per-view log-densities, via one stacked evaluation."""
    all_views = np.concatenate([b.views for b in batches], axis=0)
    flat = log_density(model, all_views)
    out = []
    cursor = 0
    for b in batches:
        out.append(flat[cursor : cursor + b.l])
        cursor += b.l
    return out


def score_dataset(
    spec: ScorerSpec,
    embeddings: Optional[EmbeddingSet] = None,
    batches: Optional[Sequence[AugmentedBatch]] = None,
    downstream: Optional[Sequence[DownstreamRecord]] = None,
    dataset_id: Optional[str] = None,
) -> ScoreVector:
    """Score every sample of one dataset with one measure, in input order.

    Density measures accept either a plain embedding set (each row scored as a
    single view) or augmented batches; on batches the non-ensembled variants
    score view 0 only, so one batch file serves both. delta and the ensembled
    variants require batches; entropy and max_score require downstream records.
    """
    measure = spec.measure
    if dataset_id is None:
        dataset_id = embeddings.dataset_id if embeddings is not None else ""

    if measure is Measure.DELTA:
        if batches is None:
            raise ValidationError("delta requires augmented batches")
        values = np.array([delta(b) for b in batches])
        ids = [b.sample_id for b in batches]
    elif measure in DOWNSTREAM_MEASURES:
        if downstream is None:
            raise ValidationError(f"{measure.value} requires downstream records")
        fn = entropy_score if measure is Measure.ENTROPY else max_score
        values = np.array([fn(r) for r in downstream])
        ids = [r.sample_id for r in downstream]
    elif measure in ENSEMBLED_MEASURES:
        if batches is None:
            raise ValidationError(f"{measure.value} requires augmented batches")
        per_batch = _stacked_view_log_densities(spec.model, batches)
        values = np.array([float(logsumexp(v) - np.log(v.shape[0])) for v in per_batch])
        ids = [b.sample_id for b in batches]
    else:  # plain density measures
        if (embeddings is None) == (batches is None):
            raise ValidationError(
                f"{measure.value} takes exactly one of embeddings or batches"
            )
        if embeddings is not None:
            values = log_density(spec.model, embeddings.data)
            ids = [str(i) for i in range(embeddings.n)]
        else:
            view0 = np.stack([b.views[0] for b in batches])
            values = log_density(spec.model, view0)
            ids = [b.sample_id for b in batches]

    return ScoreVector(measure=measure, values=values, sample_ids=tuple(ids), dataset_id=dataset_id)
