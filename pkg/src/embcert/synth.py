"""Synthetic hypersphere worlds with known ground truth.

Clusters are von Mises-Fisher bumps on S^{m-1}: vMF has an exact uniform
limit (kappa = 0) and a single concentration knob, which makes the synthetic
acceptance thresholds principled. Test-time "augmentations" are tangent-space
Gaussian jitter followed by renormalization, and the simulated downstream
classifier is a nearest-centroid softmax over the true centers, so downstream
correctness is genuinely harder near cluster boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import AugmentedBatch, DownstreamRecord, EmbeddingSet, ValidationError

OOD_MODES = ("uniform_sphere", "shifted_clusters")

MIN_CENTER_ANGLE_DEG = 30.0
MAX_CENTER_DRAWS = 1000


@dataclass(frozen=True)
class SynthConfig:
    m: int
    n_clusters: int
    per_cluster_n: int
    kappa: float
    label_noise: float = 0.0
    n_views: int = 1
    view_noise_sigma: float = 0.0
    ood_mode: str = "uniform_sphere"
    ood_angle_deg: float = 45.0
    per_cluster_test: int = 50
    n_ood: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValidationError("m must be >= 2")
        if self.n_clusters < 1 or self.per_cluster_n < 1 or self.per_cluster_test < 1:
            raise ValidationError("cluster counts and sizes must be positive")
        if self.kappa < 0:
            raise ValidationError("kappa must be >= 0")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValidationError("label_noise must lie in [0, 1)")
        if self.label_noise > 0 and self.n_clusters < 2:
            raise ValidationError("label noise needs at least 2 classes to resample from")
        if self.n_views < 1 or self.view_noise_sigma < 0:
            raise ValidationError("n_views must be >= 1 and view_noise_sigma >= 0")
        if self.ood_mode not in OOD_MODES:
            raise ValidationError(f"ood_mode must be one of {OOD_MODES}")
        if self.n_ood < 1:
            raise ValidationError("n_ood must be positive")


@dataclass(frozen=True)
class SynthWorld:
    train: EmbeddingSet
    test_batches: tuple[AugmentedBatch, ...]
    ood: EmbeddingSet
    ood_batches: tuple[AugmentedBatch, ...]
    downstream: tuple[DownstreamRecord, ...]
    ood_downstream: tuple[DownstreamRecord, ...]
    truth: dict


def _as_rng(seed_or_rng: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=-1, keepdims=True)


def sample_vmf(
    mu: np.ndarray, kappa: float, n: int, seed: Union[int, np.random.Generator]
) -> np.ndarray:
    """n i.i.d. von Mises-Fisher draws around unit vector mu with concentration kappa.

    Uses the classic rejection scheme for the cosine-of-angle component plus a
    uniformly distributed tangent direction. kappa = 0 falls back to sampling
    uniformly on the sphere.
    """
    rng = _as_rng(seed)
    mu = np.asarray(mu, dtype=np.float64)
    m = mu.shape[0]
    if abs(np.linalg.norm(mu) - 1.0) > 1e-8:
        raise ValidationError("mu must be a unit vector")
    if kappa < 0:
        raise ValidationError("kappa must be >= 0")
    if n == 0:
        return np.empty((0, m))
    if kappa == 0.0:
        return _unit(rng.normal(size=(n, m)))

    dim = m - 1
    b = dim / (np.sqrt(4.0 * kappa * kappa + dim * dim) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * np.log(1.0 - x0 * x0)
    w = np.empty(n)
    have = 0
    while have < n:
        todo = n - have
        z = rng.beta(dim / 2.0, dim / 2.0, size=todo)
        cand = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(todo)
        ok = kappa * cand + dim * np.log(1.0 - x0 * cand) - c >= np.log(u)
        took = int(ok.sum())
        w[have : have + took] = cand[ok]
        have += took

    g = rng.normal(size=(n, m))
    tangent = g - (g @ mu)[:, None] * mu
    tangent = _unit(tangent)
    return w[:, None] * mu + np.sqrt(np.maximum(0.0, 1.0 - w * w))[:, None] * tangent


def _draw_centers(rng: np.random.Generator, n_clusters: int, m: int) -> np.ndarray:
    """Cluster centers on the sphere, resampled for pairwise separation.

    For up to 12 clusters a draw must achieve a 30-degree minimum pairwise
    angle (error after 1000 attempts); beyond that the best of 1000 draws wins.
    """
    if n_clusters == 1:
        return _unit(rng.normal(size=(1, m)))
    min_cos = np.cos(np.deg2rad(MIN_CENTER_ANGLE_DEG))
    best, best_cos = None, np.inf
    for _ in range(MAX_CENTER_DRAWS):
        cand = _unit(rng.normal(size=(n_clusters, m)))
        gram = cand @ cand.T
        np.fill_diagonal(gram, -np.inf)
        worst = float(gram.max())
        if worst <= min_cos:
            return cand
        if worst < best_cos:
            best, best_cos = cand, worst
    if n_clusters <= 12:
        raise ValidationError(
            f"failed to place {n_clusters} centers with >= {MIN_CENTER_ANGLE_DEG} degree "
            f"separation in {MAX_CENTER_DRAWS} draws (m={m})"
        )
    return best


def _jittered_views(
    z: np.ndarray, n_views: int, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """View 0 is z itself; later views add tangent Gaussian noise and renormalize."""
    views = np.empty((n_views, z.shape[0]))
    views[0] = z
    if n_views > 1:
        g = rng.normal(size=(n_views - 1, z.shape[0]))
        tangent = g - (g @ z)[:, None] * z
        views[1:] = _unit(z + sigma * tangent) if sigma > 0 else z
    return views


def _softmax_records(
    points: np.ndarray,
    centers: np.ndarray,
    kappa: float,
    ids: list[str],
    true_labels: Optional[np.ndarray],
) -> list[DownstreamRecord]:
    logits = kappa * (points @ centers.T)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    records = []
    for i, sid in enumerate(ids):
        label = None if true_labels is None else int(true_labels[i])
        records.append(DownstreamRecord.from_probs(sid, probs[i], true_label=label))
    return records


def generate_world(cfg: SynthConfig) -> SynthWorld:
    """Labeled train set, augmented test/OOD batches, and simulated downstream records.

    Bit-reproducible from the config: all randomness flows from one generator
    seeded with cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    C, m = cfg.n_clusters, cfg.m
    centers = _draw_centers(rng, C, m)

    # train: vMF bumps, then optional label corruption
    train_rows = np.concatenate(
        [sample_vmf(centers[c], cfg.kappa, cfg.per_cluster_n, rng) for c in range(C)]
    )
    true_train_labels = np.repeat(np.arange(C), cfg.per_cluster_n)
    labels = true_train_labels.copy()
    corrupted = np.zeros(labels.shape[0], dtype=bool)
    if cfg.label_noise > 0:
        corrupted = rng.random(labels.shape[0]) < cfg.label_noise
        shift = rng.integers(1, C, size=int(corrupted.sum()))
        labels[corrupted] = (labels[corrupted] + shift) % C
    train = EmbeddingSet(train_rows, labels=labels, dataset_id="train")

    # in-distribution test samples, each expanded to n_views
    test_base = np.concatenate(
        [sample_vmf(centers[c], cfg.kappa, cfg.per_cluster_test, rng) for c in range(C)]
    )
    test_labels = np.repeat(np.arange(C), cfg.per_cluster_test)
    test_ids = [f"test-{i:05d}" for i in range(test_base.shape[0])]
    test_batches = tuple(
        AugmentedBatch(
            test_ids[i], _jittered_views(test_base[i], cfg.n_views, cfg.view_noise_sigma, rng)
        )
        for i in range(test_base.shape[0])
    )

    # out-of-distribution points, with the same view expansion
    if cfg.ood_mode == "uniform_sphere":
        ood_base = _unit(rng.normal(size=(cfg.n_ood, m)))
    else:
        angle = np.deg2rad(cfg.ood_angle_deg)
        counts = np.full(C, cfg.n_ood // C)
        counts[: cfg.n_ood % C] += 1
        parts = []
        for c in range(C):
            if counts[c] == 0:
                continue
            g = rng.normal(size=m)
            tangent = g - (g @ centers[c]) * centers[c]
            tangent /= np.linalg.norm(tangent)
            shifted = np.cos(angle) * centers[c] + np.sin(angle) * tangent
            parts.append(sample_vmf(shifted, cfg.kappa, int(counts[c]), rng))
        ood_base = np.concatenate(parts)
    ood_ids = [f"ood-{i:05d}" for i in range(ood_base.shape[0])]
    ood = EmbeddingSet(ood_base, dataset_id="ood")
    ood_batches = tuple(
        AugmentedBatch(
            ood_ids[i], _jittered_views(ood_base[i], cfg.n_views, cfg.view_noise_sigma, rng)
        )
        for i in range(ood_base.shape[0])
    )

    downstream = _softmax_records(test_base, centers, cfg.kappa, test_ids, test_labels)
    ood_downstream = _softmax_records(ood_base, centers, cfg.kappa, ood_ids, None)

    truth = {
        "centers": centers.tolist(),
        "train_true_labels": true_train_labels.tolist(),
        "train_corruption_mask": corrupted.tolist(),
        "test_true_labels": test_labels.tolist(),
        "ood_mode": cfg.ood_mode,
    }
    return SynthWorld(
        train=train,
        test_batches=test_batches,
        ood=ood,
        ood_batches=ood_batches,
        downstream=tuple(downstream),
        ood_downstream=tuple(ood_downstream),
        truth=truth,
    )
