"""Gaussian mixture fitting (EM) and log-density evaluation.

The mixture is fit in plain Euclidean coordinates on the unit-norm embedding
rows. Because the data lives on an (m-1)-sphere, every sample covariance is
rank-deficient by construction; a fixed ridge is therefore added to each
covariance diagonal on every M-step. Initialization is k-means++ from the
config seed, and the whole fit is a pure function of (data, config): the same
inputs produce a bit-identical model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import EmbeddingSet, FitMeta, GmmModel, ValidationError

COLLAPSE_WEIGHT = 1e-12
MAX_COLLAPSE_RESEEDS = 10

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmFitConfig:
    n_comp: int
    cov_structure: str = "full"
    ridge_eps: float = 1e-6
    max_iters: int = 200
    rel_tol: float = 1e-6
    n_restarts: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_comp < 1:
            raise ValidationError("n_comp must be a positive integer")
        if self.cov_structure not in ("full", "diagonal"):
            raise ValidationError(f"unknown cov_structure {self.cov_structure!r}")
        if self.ridge_eps <= 0:
            raise ValidationError("ridge_eps must be > 0")
        if self.max_iters < 1 or self.rel_tol <= 0 or self.n_restarts < 1:
            raise ValidationError("max_iters, rel_tol and n_restarts must be positive")


def _kmeans_pp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws of k data points as initial means."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = float(d2.sum())
        if total > 0.0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining mass sits on already-chosen points (duplicates)
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _component_log_density(X: np.ndarray, means: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Per-point, per-component Gaussian log-densities, shape (n, n_comp)."""
    n, m = X.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for c in range(k):
        L = chol[c]
        y = solve_triangular(L, (X - means[c]).T, lower=True, check_finite=False)
        quad = np.einsum("ij,ij->j", y, y)
        logdet = 2.0 * float(np.log(np.diag(L)).sum())
        out[:, c] = -0.5 * (m * _LOG_2PI + logdet + quad)
    return out


def _e_step(
    X: np.ndarray, weights: np.ndarray, means: np.ndarray, chol: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Return (log responsibilities, per-point log-density, total log-likelihood)."""
    log_weighted = _component_log_density(X, means, chol) + np.log(weights)
    point_ll = logsumexp(log_weighted, axis=1)
    log_resp = log_weighted - point_ll[:, None]
    return log_resp, point_ll, float(point_ll.sum())


def _m_step(
    X: np.ndarray, resp: np.ndarray, ridge_eps: float, cov_structure: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, m = X.shape
    nk = resp.sum(axis=0)
    weights = nk / n
    safe_nk = np.maximum(nk, np.finfo(float).tiny)
    means = (resp.T @ X) / safe_nk[:, None]
    k = means.shape[0]
    chol = np.empty((k, m, m))
    if cov_structure == "diagonal":
        for c in range(k):
            diff = X - means[c]
            var = (resp[:, c] @ (diff * diff)) / safe_nk[c] + ridge_eps
            chol[c] = np.diag(np.sqrt(var))
    else:
        for c in range(k):
            diff = X - means[c]
            cov = (diff * resp[:, c, None]).T @ diff / safe_nk[c]
            cov[np.diag_indices(m)] += ridge_eps
            chol[c] = np.linalg.cholesky(cov)
    return weights, means, chol


def _reseed_collapsed(
    collapsed: np.ndarray,
    point_ll: np.ndarray,
    X: np.ndarray,
    weights: np.ndarray,
    means: np.ndarray,
    chol: np.ndarray,
    ridge_eps: float,
) -> None:
    """Re-seed zero-mass components from the worst-explained point, in place."""
    n, m = X.shape
    global_var = X.var(axis=0) + ridge_eps
    order = np.argsort(point_ll, kind="stable")
    for j, c in enumerate(collapsed):
        p = int(order[j % n])
        means[c] = X[p]
        chol[c] = np.diag(np.sqrt(global_var))
        weights[c] = 1.0 / n
    weights /= weights.sum()


def _fit_once(
    X: np.ndarray, cfg: GmmFitConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[float], int, bool]:
    n = X.shape[0]
    centers = _kmeans_pp_centers(X, cfg.n_comp, rng)
    # hard-assign to nearest seed, then one M-step to get initial parameters
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, cfg.n_comp))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0
    empty = np.flatnonzero(resp.sum(axis=0) == 0)
    for c in empty:
        # duplicate seeds can starve a component; hand it the farthest point
        p = int(np.argmax(d2.min(axis=1)))
        resp[p] = 0.0
        resp[p, c] = 1.0
    weights, means, chol = _m_step(X, resp, cfg.ridge_eps, cfg.cov_structure)

    lls: list[float] = []
    reseeds = 0
    converged = False
    prev_params = (weights, means, chol)
    reseeded_last = False
    for it in range(cfg.max_iters + 1):
        log_resp, point_ll, ll = _e_step(X, weights, means, chol)
        if lls and ll < lls[-1] and not reseeded_last:
            # Once EM gains shrink below the ridge's perturbation of the true
            # likelihood, a step can dip; reject it and keep the previous
            # (better) parameters so the recorded sequence stays an ascent.
            weights, means, chol = prev_params
            converged = True
            break
        lls.append(ll)
        if it >= 1 and (lls[-1] - lls[-2]) < cfg.rel_tol * abs(lls[-2]):
            converged = True
            break
        if it == cfg.max_iters:
            break
        prev_params = (weights, means, chol)
        weights, means, chol = _m_step(X, np.exp(log_resp), cfg.ridge_eps, cfg.cov_structure)
        reseeded_last = False
        collapsed = np.flatnonzero(weights < COLLAPSE_WEIGHT)
        if collapsed.size:
            reseeds += collapsed.size
            if reseeds > MAX_COLLAPSE_RESEEDS:
                raise ValidationError(
                    f"component collapse recurred {reseeds} times "
                    f"(> {MAX_COLLAPSE_RESEEDS}); data cannot support n_comp={cfg.n_comp}"
                )
            _reseed_collapsed(collapsed, point_ll, X, weights, means, chol, cfg.ridge_eps)
            reseeded_last = True
    return weights, means, chol, lls, reseeds, converged


def fit_gmm(train: EmbeddingSet, cfg: GmmFitConfig) -> GmmModel:
    """Fit a mixture to the training embeddings by EM.

    Runs ``cfg.n_restarts`` independent k-means++-seeded fits (restart r draws
    from a generator seeded by (cfg.seed, r)) and keeps the one with the
    highest final log-likelihood, ties going to the lowest restart index.
    """
    if cfg.n_comp > train.n:
        raise ValidationError(
            f"n_comp={cfg.n_comp} exceeds the {train.n} training points available"
        )
    X = train.data
    best = None
    for r in range(cfg.n_restarts):
        rng = np.random.default_rng([cfg.seed, r])
        weights, means, chol, lls, reseeds, converged = _fit_once(X, cfg, rng)
        if best is None or lls[-1] > best[0]:
            best = (lls[-1], r, weights, means, chol, lls, reseeds, converged)
    final_ll, r, weights, means, chol, lls, reseeds, converged = best
    k_filter, tau_filter = train.filter_params if train.filter_params else (None, None)
    meta = FitMeta(
        seed=cfg.seed,
        iterations=len(lls) - 1,
        final_log_likelihood=final_ll,
        ridge_eps=cfg.ridge_eps,
        n_train=train.n,
        k=k_filter,
        tau=tau_filter,
        n_restarts=cfg.n_restarts,
        restart_index=r,
        collapse_reseeds=reseeds,
        converged=converged,
        log_likelihoods=tuple(lls),
    )
    return GmmModel(
        n_comp=cfg.n_comp,
        weights=weights,
        means=means,
        chol=chol,
        cov_structure=cfg.cov_structure,
        fit_meta=meta,
    )


def log_density(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """log p(z) under the mixture for each row of ``points`` (n x m).

    Computed as a per-point log-sum-exp over component log-densities; raw
    densities are never exponentiated.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.m:
        raise ValidationError(
            f"points must be 2-D with {model.m} columns, got shape {points.shape}"
        )
    log_weighted = _component_log_density(points, model.means, model.chol) + np.log(model.weights)
    return logsumexp(log_weighted, axis=1)


def responsibilities(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """Posterior component membership probabilities, one row per point."""
    points = np.asarray(points, dtype=np.float64)
    log_resp, _, _ = _e_step(points, model.weights, model.means, model.chol)
    return np.exp(log_resp)


def n_parameters(model: GmmModel) -> int:
    m = model.m
    per_cov = m * (m + 1) // 2 if model.cov_structure == "full" else m
    return (model.n_comp - 1) + model.n_comp * m + model.n_comp * per_cov


def bic(model: GmmModel, train: EmbeddingSet) -> float:
    """Bayesian information criterion of the model on its fitting set."""
    total_ll = float(log_density(model, train.data).sum())
    return n_parameters(model) * float(np.log(train.n)) - 2.0 * total_ll
