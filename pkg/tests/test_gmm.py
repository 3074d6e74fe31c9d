import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from embcert.core import EmbeddingSet, FitMeta, GmmModel, ValidationError
from embcert.gmm import GmmFitConfig, bic, fit_gmm, log_density, n_parameters, responsibilities
from embcert.neighbors import ConsistencyConfig, filter_consistent
from embcert.synth import sample_vmf
from tests.conftest import unit_rows

LOG_2PI = np.log(2 * np.pi)


def _standard_normal_model(m=2):
    meta = FitMeta(seed=0, iterations=0, final_log_likelihood=0.0, ridge_eps=1e-6, n_train=1)
    return GmmModel(1, np.array([1.0]), np.zeros((1, m)), np.eye(m)[None], "full", meta)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def test_single_gaussian_matches_closed_form_mle():
    rng = np.random.default_rng(0)
    mu = np.zeros(6)
    mu[0] = 1.0
    X = sample_vmf(mu, 80.0, 500, rng)
    emb = EmbeddingSet(X)
    cfg = GmmFitConfig(n_comp=1, ridge_eps=1e-6, seed=3)
    model = fit_gmm(emb, cfg)

    sample_mean = X.mean(axis=0)
    centered = X - sample_mean
    sample_cov = centered.T @ centered / X.shape[0] + cfg.ridge_eps * np.eye(6)
    fitted_cov = model.chol[0] @ model.chol[0].T
    np.testing.assert_allclose(model.means[0], sample_mean, atol=1e-10)
    np.testing.assert_allclose(fitted_cov, sample_cov, atol=1e-10)


def test_three_cluster_recovery_on_circle():
    centers = np.array([[1.0, 0.0], [-0.5, np.sqrt(3) / 2], [-0.5, -np.sqrt(3) / 2]])
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = np.concatenate([sample_vmf(c, 200.0, 200, rng) for c in centers])
        model = fit_gmm(EmbeddingSet(X), GmmFitConfig(n_comp=3, seed=seed))
        cost = np.linalg.norm(model.means[:, None, :] - centers[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        assert cost[rows, cols].max() < 0.05


def test_fit_is_bit_deterministic(small_world):
    cfg = GmmFitConfig(n_comp=4, seed=17)
    a = fit_gmm(small_world.train, cfg)
    b = fit_gmm(small_world.train, cfg)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.chol, b.chol)
    assert a.fit_meta.log_likelihoods == b.fit_meta.log_likelihoods


def test_log_likelihood_sequence_non_decreasing(small_world):
    for n_comp in (1, 3, 8):
        model = fit_gmm(small_world.train, GmmFitConfig(n_comp=n_comp, seed=2))
        lls = np.asarray(model.fit_meta.log_likelihoods)
        assert np.all(np.diff(lls) >= -1e-9)
        assert model.fit_meta.final_log_likelihood == lls[-1]


def test_n_comp_larger_than_n_is_rejected():
    emb = EmbeddingSet(np.eye(3))
    with pytest.raises(ValidationError, match="exceeds"):
        fit_gmm(emb, GmmFitConfig(n_comp=4))


def test_restarts_pick_best_likelihood(small_world):
    single = fit_gmm(small_world.train, GmmFitConfig(n_comp=4, seed=17, n_restarts=1))
    multi = fit_gmm(small_world.train, GmmFitConfig(n_comp=4, seed=17, n_restarts=4))
    assert multi.fit_meta.final_log_likelihood >= single.fit_meta.final_log_likelihood
    assert multi.fit_meta.n_restarts == 4
    assert 0 <= multi.fit_meta.restart_index < 4


def test_filtered_train_set_is_recorded_in_fit_meta(small_world):
    filtered = filter_consistent(small_world.train, ConsistencyConfig(k_spec=5, tau=0.5))
    model = fit_gmm(filtered, GmmFitConfig(n_comp=2, seed=1))
    assert model.fit_meta.k == 5
    assert model.fit_meta.tau == 0.5
    assert model.fit_meta.n_train == filtered.n
    plain = fit_gmm(small_world.train, GmmFitConfig(n_comp=2, seed=1))
    assert plain.fit_meta.k is None and plain.fit_meta.tau is None


# ---------------------------------------------------------------------------
# log-density evaluation
# ---------------------------------------------------------------------------


def test_standard_normal_log_density_closed_form():
    model = _standard_normal_model(m=2)
    val = log_density(model, np.array([[0.0, 0.0]]))[0]
    assert val == pytest.approx(-LOG_2PI, abs=1e-12)
    # at radius r the density drops by r^2/2
    val_r = log_density(model, np.array([[3.0, 4.0]]))[0]
    assert val_r == pytest.approx(-LOG_2PI - 12.5, abs=1e-12)


def test_density_peaks_at_heaviest_component_mean(small_model):
    c = int(np.argmax(small_model.weights))
    at_mean = log_density(small_model, small_model.means[c][None, :])[0]
    far = log_density(small_model, -small_model.means[c][None, :] * 0 + 10.0)[0]
    assert at_mean > far


def test_duplicated_component_equals_single():
    meta = FitMeta(seed=0, iterations=0, final_log_likelihood=0.0, ridge_eps=1e-6, n_train=1)
    single = _standard_normal_model(m=3)
    double = GmmModel(
        2, np.array([0.5, 0.5]), np.zeros((2, 3)), np.stack([np.eye(3)] * 2), "full", meta
    )
    pts = unit_rows(np.random.default_rng(4), 50, 3)
    np.testing.assert_allclose(
        log_density(single, pts), log_density(double, pts), atol=1e-12
    )


def test_log_density_invariant_to_component_permutation(small_model):
    perm = np.array([2, 0, 3, 1])
    meta = small_model.fit_meta
    permuted = GmmModel(
        small_model.n_comp,
        small_model.weights[perm],
        small_model.means[perm],
        small_model.chol[perm],
        small_model.cov_structure,
        meta,
    )
    pts = unit_rows(np.random.default_rng(5), 100, small_model.m)
    a = log_density(small_model, pts)
    b = log_density(permuted, pts)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_fit_commutes_with_coordinate_permutation(small_world):
    X = small_world.train.data
    perm = np.random.default_rng(6).permutation(X.shape[1])
    emb_perm = EmbeddingSet(X[:, perm], dataset_id="perm")
    cfg = GmmFitConfig(n_comp=3, seed=13)
    model = fit_gmm(small_world.train, cfg)
    model_perm = fit_gmm(emb_perm, cfg)
    queries = unit_rows(np.random.default_rng(7), 200, X.shape[1])
    np.testing.assert_allclose(
        log_density(model, queries), log_density(model_perm, queries[:, perm]), atol=1e-9
    )


def test_responsibilities_sum_to_one(small_model, small_world):
    resp = responsibilities(small_model, small_world.train.data)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(resp >= 0)


def test_log_density_dimension_mismatch(small_model):
    with pytest.raises(ValidationError, match="columns"):
        log_density(small_model, np.zeros((3, small_model.m + 1)))


# ---------------------------------------------------------------------------
# BIC
# ---------------------------------------------------------------------------


def test_parameter_counts():
    meta = FitMeta(seed=0, iterations=0, final_log_likelihood=0.0, ridge_eps=1e-6, n_train=100)
    diag = GmmModel(1, np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None], "diagonal", meta)
    assert n_parameters(diag) == 4  # 0 weights + 2 means + 2 variances
    full = GmmModel(1, np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None], "full", meta)
    assert n_parameters(full) == 5


def test_bic_value_and_determinism():
    rng = np.random.default_rng(8)
    emb = EmbeddingSet(unit_rows(rng, 100, 2))
    model = fit_gmm(emb, GmmFitConfig(n_comp=1, cov_structure="diagonal", seed=1))
    expected = 4 * np.log(100) - 2 * float(log_density(model, emb.data).sum())
    assert bic(model, emb) == pytest.approx(expected, rel=1e-12)
    assert bic(model, emb) == bic(model, emb)


def test_bic_eventually_grows_with_n_comp():
    # a very tight cap is locally Gaussian: one component should win outright,
    # and the parameter penalty must dominate once n_comp is absurd
    rng = np.random.default_rng(9)
    mu = np.zeros(4)
    mu[0] = 1.0
    emb = EmbeddingSet(sample_vmf(mu, 2000.0, 300, rng))
    values = [bic(fit_gmm(emb, GmmFitConfig(n_comp=nc, seed=2)), emb) for nc in (1, 4, 12, 24)]
    assert values[0] == min(values)
    assert values[-1] > values[0]
