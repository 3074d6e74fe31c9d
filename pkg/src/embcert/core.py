"""Shared domain types for embedding reliability scoring.

Everything downstream (density fitting, consistency filtering, scoring,
evaluation) operates on the immutable containers defined here. All float
payloads are held as 64-bit numpy arrays regardless of ingest width, and
every array is frozen (``writeable=False``) after validation so instances
are safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Row norms must sit within this distance of 1.0 unless renormalized at ingest.
NORM_ATOL = 1e-4
# Rows with norm below this are degenerate and rejected even when renormalizing.
ZERO_NORM_FLOOR = 1e-12

PROB_SUM_ATOL = 1e-6
WEIGHT_SUM_ATOL = 1e-9

COV_STRUCTURES = ("full", "diagonal")


class ValidationError(ValueError):
    """Raised when ingested or constructed data violates a documented invariant."""


class Measure(str, enum.Enum):
    DELTA = "delta"
    P_EMB = "p_emb"
    P_EMB_ENS = "p_emb_ens"
    P_EMB_KTAU = "p_emb_ktau"
    P_EMB_ENS_KTAU = "p_emb_ens_ktau"
    ENTROPY = "entropy"
    MAX_SCORE = "max_score"


class Orientation(str, enum.Enum):
    UNCERTAINTY_HIGH = "uncertainty_high"
    CERTAINTY_HIGH = "certainty_high"


class Notion(str, enum.Enum):
    ALEATORIC = "aleatoric"
    EPISTEMIC = "epistemic"
    OVERALL = "overall"


# Which way each measure points: variation-style and entropy scores grow with
# uncertainty, densities and classifier confidence grow with certainty.
ORIENTATION_BY_MEASURE: dict[Measure, Orientation] = {
    Measure.DELTA: Orientation.UNCERTAINTY_HIGH,
    Measure.ENTROPY: Orientation.UNCERTAINTY_HIGH,
    Measure.P_EMB: Orientation.CERTAINTY_HIGH,
    Measure.P_EMB_ENS: Orientation.CERTAINTY_HIGH,
    Measure.P_EMB_KTAU: Orientation.CERTAINTY_HIGH,
    Measure.P_EMB_ENS_KTAU: Orientation.CERTAINTY_HIGH,
    Measure.MAX_SCORE: Orientation.CERTAINTY_HIGH,
}

DENSITY_MEASURES = frozenset(
    {Measure.P_EMB, Measure.P_EMB_ENS, Measure.P_EMB_KTAU, Measure.P_EMB_ENS_KTAU}
)
FILTERED_MEASURES = frozenset({Measure.P_EMB_KTAU, Measure.P_EMB_ENS_KTAU})
ENSEMBLED_MEASURES = frozenset({Measure.P_EMB_ENS, Measure.P_EMB_ENS_KTAU})
DOWNSTREAM_MEASURES = frozenset({Measure.ENTROPY, Measure.MAX_SCORE})


def _frozen_f64(a, name: str, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _check_unit_rows(rows: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms < ZERO_NORM_FLOOR):
        bad = int(np.argmax(norms < ZERO_NORM_FLOOR))
        raise ValidationError(f"{name} row {bad} has zero norm ({norms[bad]:.3e})")
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > NORM_ATOL:
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise ValidationError(
            f"{name} row {bad} has norm {norms[bad]:.6f}, deviating {worst:.2e} "
            f"from 1.0 (> {NORM_ATOL}); pass renormalize=True to rescale at ingest"
        )


def renormalize_rows(rows: np.ndarray, name: str = "data") -> np.ndarray:
    """Divide each row by its norm. Rows with norm < 1e-12 are an error."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms < ZERO_NORM_FLOOR):
        bad = int(np.argmax(norms[:, 0] < ZERO_NORM_FLOOR))
        raise ValidationError(f"{name} row {bad} has zero norm and cannot be renormalized")
    return rows / norms


@dataclass(frozen=True)
class EmbeddingSet:
    """N unit-norm embedding rows with optional integer class labels.

    Labels are dense non-negative class ids; when the ingested source carried
    string class names, ``label_names[id]`` preserves the mapping.
    ``filter_params`` carries the (k, tau) pair when the set is the output of
    consistency filtering, so a downstream fit can record it in its metadata.
    """

    data: np.ndarray
    labels: Optional[np.ndarray] = None
    dataset_id: str = ""
    normalized_at_ingest: bool = False
    filter_params: Optional[tuple[int, float]] = None
    label_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        data = _frozen_f64(self.data, "data", ndim=2)
        n, m = data.shape
        if n < 1 or m < 2:
            raise ValidationError(f"need N >= 1 and m >= 2, got N={n}, m={m}")
        _check_unit_rows(data, "data")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True)
            if labels.shape != (n,):
                raise ValidationError(f"labels must have length N={n}, got shape {labels.shape}")
            if np.any(labels < 0):
                raise ValidationError("labels must be non-negative class ids")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.label_names is not None:
            if self.labels is None:
                raise ValidationError("label_names given without labels")
            names = tuple(str(s) for s in self.label_names)
            if int(self.labels.max()) >= len(names):
                raise ValidationError(
                    f"labels reference id {int(self.labels.max())} but only "
                    f"{len(names)} label_names are given"
                )
            object.__setattr__(self, "label_names", names)

    @classmethod
    def from_rows(
        cls,
        rows,
        labels=None,
        dataset_id: str = "",
        renormalize: bool = False,
        label_names: Optional[Sequence[str]] = None,
    ) -> "EmbeddingSet":
        rows = np.asarray(rows, dtype=np.float64)
        if renormalize:
            rows = renormalize_rows(rows)
        return cls(
            rows,
            labels=labels,
            dataset_id=dataset_id,
            normalized_at_ingest=renormalize,
            label_names=None if label_names is None else tuple(label_names),
        )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def is_labeled(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class AugmentedBatch:
    """l embedding views of one test sample, one row per input transformation.

    Row 0 is the canonical (untransformed) view by producer convention; the
    non-ensembled density measures score exactly that row.
    """

    sample_id: str
    views: np.ndarray

    def __post_init__(self) -> None:
        views = _frozen_f64(self.views, "views", ndim=2)
        if views.shape[0] < 1:
            raise ValidationError("a batch needs at least one view")
        _check_unit_rows(views, f"views[{self.sample_id}]")
        object.__setattr__(self, "views", views)

    @classmethod
    def from_rows(cls, sample_id: str, rows, renormalize: bool = False) -> "AugmentedBatch":
        rows = np.asarray(rows, dtype=np.float64)
        if renormalize:
            rows = renormalize_rows(rows, name=f"views[{sample_id}]")
        return cls(sample_id, rows)

    @property
    def l(self) -> int:
        return self.views.shape[0]

    @property
    def m(self) -> int:
        return self.views.shape[1]


@dataclass(frozen=True)
class FitMeta:
    """Provenance of a fitted mixture, persisted with the model."""

    seed: int
    iterations: int
    final_log_likelihood: float
    ridge_eps: float
    n_train: int
    k: Optional[int] = None
    tau: Optional[float] = None
    n_restarts: int = 1
    restart_index: int = 0
    collapse_reseeds: int = 0
    converged: bool = True
    log_likelihoods: tuple[float, ...] = ()

    def is_filtered(self) -> bool:
        return self.k is not None and self.tau is not None


@dataclass(frozen=True)
class GmmModel:
    """Fitted Gaussian mixture: weights, means, and Cholesky-factored covariances.

    Covariances are held only as lower-triangular Cholesky factors; density
    evaluation never refactorizes. Immutable after fit.
    """

    n_comp: int
    weights: np.ndarray
    means: np.ndarray
    chol: np.ndarray
    cov_structure: str
    fit_meta: FitMeta

    def __post_init__(self) -> None:
        if self.cov_structure not in COV_STRUCTURES:
            raise ValidationError(f"cov_structure must be one of {COV_STRUCTURES}")
        weights = _frozen_f64(self.weights, "weights", ndim=1)
        means = _frozen_f64(self.means, "means", ndim=2)
        chol = np.array(self.chol, dtype=np.float64, copy=True)
        if weights.shape != (self.n_comp,):
            raise ValidationError(f"weights must have length n_comp={self.n_comp}")
        if means.shape[0] != self.n_comp:
            raise ValidationError("means must have n_comp rows")
        m = means.shape[1]
        if chol.shape != (self.n_comp, m, m):
            raise ValidationError(f"chol must have shape ({self.n_comp}, {m}, {m})")
        if np.any(weights <= 0):
            raise ValidationError("all mixture weights must be strictly positive")
        if abs(float(weights.sum()) - 1.0) > WEIGHT_SUM_ATOL:
            raise ValidationError(f"weights sum to {weights.sum()!r}, not 1")
        diags = chol[:, np.arange(m), np.arange(m)]
        if np.any(diags <= 0):
            raise ValidationError("every Cholesky factor needs a strictly positive diagonal")
        chol.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "chol", chol)

    @property
    def m(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class ScoreVector:
    """Per-sample scores for one measure over one dataset, in input order."""

    measure: Measure
    values: np.ndarray
    sample_ids: tuple[str, ...]
    dataset_id: str = ""
    orientation: Orientation = field(init=False)

    def __post_init__(self) -> None:
        values = _frozen_f64(self.values, "values", ndim=1)
        ids = tuple(str(s) for s in self.sample_ids)
        if len(ids) != values.shape[0]:
            raise ValidationError(
                f"sample_ids length {len(ids)} != values length {values.shape[0]}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "orientation", ORIENTATION_BY_MEASURE[Measure(self.measure)])

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def uncertainty_values(self) -> np.ndarray:
        """Scores flipped, if needed, so that larger always means more uncertain."""
        if self.orientation is Orientation.UNCERTAINTY_HIGH:
            return self.values
        return -self.values


@dataclass(frozen=True)
class DownstreamRecord:
    """One sample's downstream classifier output (class probabilities)."""

    sample_id: str
    class_probs: np.ndarray
    predicted: int
    true_label: Optional[int] = None
    correct: Optional[bool] = None

    def __post_init__(self) -> None:
        probs = _frozen_f64(self.class_probs, "class_probs", ndim=1)
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError(f"class_probs for {self.sample_id!r} fall outside [0, 1]")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_ATOL:
            raise ValidationError(
                f"class_probs for {self.sample_id!r} sum to {total!r}, not 1"
            )
        if not 0 <= self.predicted < probs.shape[0]:
            raise ValidationError(f"predicted class {self.predicted} out of range")
        if (self.true_label is None) != (self.correct is None):
            raise ValidationError("correct must be present exactly when true_label is")
        object.__setattr__(self, "class_probs", probs)

    @classmethod
    def from_probs(
        cls, sample_id: str, class_probs, true_label: Optional[int] = None
    ) -> "DownstreamRecord":
        probs = np.asarray(class_probs, dtype=np.float64)
        predicted = int(np.argmax(probs))
        correct = None if true_label is None else bool(predicted == int(true_label))
        return cls(sample_id, probs, predicted, true_label=true_label, correct=correct)

    @property
    def n_classes(self) -> int:
        return self.class_probs.shape[0]


@dataclass(frozen=True)
class EvalInstance:
    """AUROC of one measure against one uncertainty notion on one dataset pair."""

    measure: Measure
    notion: Notion
    in_dist_id: str
    out_dist_id: str
    gt_labels: np.ndarray
    auroc: float
    n_pos: int
    n_neg: int

    def __post_init__(self) -> None:
        labels = np.array(self.gt_labels, dtype=np.int8, copy=True)
        if labels.ndim != 1 or not np.all((labels == 0) | (labels == 1)):
            raise ValidationError("gt_labels must be a binary vector")
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValidationError(
                f"need at least one sample in each class, got n_pos={self.n_pos}, "
                f"n_neg={self.n_neg}"
            )
        if not 0.0 <= self.auroc <= 1.0:
            raise ValidationError(f"auroc {self.auroc!r} outside [0, 1]")
        labels.setflags(write=False)
        object.__setattr__(self, "gt_labels", labels)
        object.__setattr__(self, "notion", Notion(self.notion))
        object.__setattr__(self, "measure", Measure(self.measure))
