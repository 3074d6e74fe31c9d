"""Exact k-nearest-neighbor search and label-consistency filtering.

Distances are Euclidean; on unit-norm rows this orders pairs identically to
cosine distance (||a-b||^2 = 2 - 2<a,b>), so the choice is presentation-only.
Search is exact brute force: at desk scale (N up to ~1e5) this is tractable
and avoids the nondeterminism of approximate indexes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import EmbeddingSet, ValidationError


@dataclass(frozen=True)
class ConsistencyConfig:
    """Neighborhood size and agreement threshold for consistency filtering.

    ``k_spec`` is either an absolute neighbor count (int >= 1) or a fraction
    of N (float in (0, 1]); ``tau`` is the inclusive agreement threshold.
    """

    k_spec: Union[int, float] = 0.01
    tau: float = 0.5

    def __post_init__(self) -> None:
        if isinstance(self.k_spec, bool) or (
            isinstance(self.k_spec, int) and self.k_spec < 1
        ):
            raise ValidationError("absolute k must be an integer >= 1")
        if isinstance(self.k_spec, float) and not 0.0 < self.k_spec <= 1.0:
            raise ValidationError(f"fractional k must lie in (0, 1], got {self.k_spec}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must lie in [0, 1], got {self.tau}")

    def resolve_k(self, n: int) -> int:
        if isinstance(self.k_spec, int):
            k = self.k_spec
        else:
            k = max(1, int(round(self.k_spec * n)))
        if not 1 <= k <= n - 1:
            raise ValidationError(f"resolved k={k} outside [1, {n - 1}] for N={n}")
        return k


def knn_indices(emb: EmbeddingSet, k: int) -> np.ndarray:
    """Indices of the k nearest rows to each row, self excluded.

    Exact brute force; distance ties break toward the smaller row index
    (stable sort on squared distances). Distances are computed from explicit
    row differences rather than the gram-matrix identity: BLAS panel layouts
    can round the identity differently per column, which would make bitwise
    duplicate rows compare unequal and break the tie rule.
    """
    n = emb.n
    if not 1 <= k <= n - 1:
        raise ValidationError(f"k={k} outside [1, {n - 1}] for N={n}")
    X = emb.data
    out = np.empty((n, k), dtype=np.int64)
    # chunk queries so the (chunk, n, m) difference block stays ~tens of MB
    chunk = max(1, int(4e6) // max(n * emb.m, 1))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = X[start:stop, None, :] - X[None, :, :]
        d2 = np.einsum("qjm,qjm->qj", diff, diff)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def consistency_scores(emb: EmbeddingSet, k: int) -> np.ndarray:
    """Fraction of each row's k nearest neighbors sharing its class label."""
    if emb.labels is None:
        raise ValidationError("consistency scores need a labeled embedding set")
    neigh = knn_indices(emb, k)
    agree = emb.labels[neigh] == emb.labels[:, None]
    return agree.mean(axis=1)


def filter_consistent(emb: EmbeddingSet, cfg: ConsistencyConfig) -> EmbeddingSet:
    """Rows whose consistency score is >= tau, original order preserved.

    The threshold is inclusive so that tau = 0 keeps every row and a density
    fit to the result reduces exactly to the unfiltered density.
    """
    k = cfg.resolve_k(emb.n)
    scores = consistency_scores(emb, k)
    keep = scores >= cfg.tau
    if not keep.any():
        vals, counts = np.unique(scores, return_counts=True)
        dist = ", ".join(f"{v:g}: {c}" for v, c in zip(vals, counts))
        raise ValidationError(
            f"consistency filter (k={k}, tau={cfg.tau}) removed all {emb.n} rows; "
            f"score distribution {{{dist}}}"
        )
    return EmbeddingSet(
        emb.data[keep],
        labels=None if emb.labels is None else emb.labels[keep],
        dataset_id=emb.dataset_id,
        normalized_at_ingest=emb.normalized_at_ingest,
        filter_params=(k, float(cfg.tau)),
        label_names=emb.label_names,
    )
