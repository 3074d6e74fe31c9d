import numpy as np
import pytest

from embcert.core import ValidationError
from embcert.gmm import GmmFitConfig, fit_gmm, log_density
from embcert.neighbors import consistency_scores
from embcert.scorers import delta
from embcert.synth import SynthConfig, generate_world, sample_vmf


def test_vmf_outputs_are_unit_norm():
    mu = np.zeros(8)
    mu[0] = 1.0
    for kappa in (0.0, 5.0, 200.0):
        X = sample_vmf(mu, kappa, 500, seed=3)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


def test_vmf_kappa_zero_is_uniform():
    mu = np.zeros(8)
    mu[0] = 1.0
    X = sample_vmf(mu, 0.0, 10_000, seed=4)
    assert np.linalg.norm(X.mean(axis=0)) < 0.05


def test_vmf_concentrates_around_mu():
    mu = np.array([0.0, 0.0, 1.0])
    X = sample_vmf(mu, 200.0, 1000, seed=5)
    mean_dir = X.mean(axis=0)
    mean_dir /= np.linalg.norm(mean_dir)
    angle = np.degrees(np.arccos(np.clip(mean_dir @ mu, -1, 1)))
    assert angle < 2.0


def test_vmf_is_reproducible():
    mu = np.zeros(4)
    mu[1] = 1.0
    a = sample_vmf(mu, 30.0, 64, seed=9)
    b = sample_vmf(mu, 30.0, 64, seed=9)
    np.testing.assert_array_equal(a, b)


def test_vmf_input_validation():
    with pytest.raises(ValidationError, match="unit"):
        sample_vmf(np.array([1.0, 1.0]), 5.0, 3, seed=0)
    with pytest.raises(ValidationError, match="kappa"):
        sample_vmf(np.array([1.0, 0.0]), -1.0, 3, seed=0)


# ---------------------------------------------------------------------------
# world generation
# ---------------------------------------------------------------------------


def _cfg(**overrides):
    base = dict(
        m=8,
        n_clusters=5,
        per_cluster_n=100,
        kappa=60.0,
        label_noise=0.0,
        n_views=3,
        view_noise_sigma=0.04,
        per_cluster_test=20,
        n_ood=80,
        seed=7,
    )
    base.update(overrides)
    return SynthConfig(**base)


def test_world_is_bit_reproducible():
    a = generate_world(_cfg())
    b = generate_world(_cfg())
    np.testing.assert_array_equal(a.train.data, b.train.data)
    np.testing.assert_array_equal(a.train.labels, b.train.labels)
    np.testing.assert_array_equal(a.ood.data, b.ood.data)
    for ba, bb in zip(a.test_batches, b.test_batches):
        np.testing.assert_array_equal(ba.views, bb.views)
    assert a.truth == b.truth


def test_world_shapes_and_ids():
    w = generate_world(_cfg())
    assert w.train.n == 500 and w.train.m == 8
    assert len(w.test_batches) == 100
    assert all(b.l == 3 for b in w.test_batches)
    assert w.ood.n == 80 and len(w.ood_batches) == 80
    assert [r.sample_id for r in w.downstream] == [b.sample_id for b in w.test_batches]
    assert all(r.true_label is not None for r in w.downstream)
    assert all(r.true_label is None for r in w.ood_downstream)


def test_high_kappa_world_has_accurate_downstream():
    w = generate_world(_cfg(kappa=200.0, label_noise=0.0))
    acc = np.mean([r.correct for r in w.downstream])
    assert acc > 0.99


def test_zero_view_noise_gives_zero_delta():
    w = generate_world(_cfg(view_noise_sigma=0.0))
    assert all(delta(b) == 0.0 for b in w.test_batches)


def test_uniform_ood_has_lower_density_than_test_points():
    w = generate_world(_cfg(kappa=50.0))
    model = fit_gmm(w.train, GmmFitConfig(n_comp=5, seed=1))
    test0 = np.stack([b.views[0] for b in w.test_batches])
    assert log_density(model, w.ood.data).mean() < log_density(model, test0).mean()


def test_noiseless_concentrated_world_is_consistent():
    cfg = SynthConfig(
        m=8, n_clusters=5, per_cluster_n=200, kappa=200.0,
        label_noise=0.0, n_views=1, per_cluster_test=1, n_ood=1, seed=2,
    )
    w = generate_world(cfg)
    k = max(1, round(0.01 * w.train.n))
    assert consistency_scores(w.train, k).mean() >= 0.95


def test_label_noise_corrupts_the_stated_fraction():
    w = generate_world(_cfg(label_noise=0.25, seed=3))
    mask = np.asarray(w.truth["train_corruption_mask"])
    true_labels = np.asarray(w.truth["train_true_labels"])
    frac = mask.mean()
    assert 0.15 < frac < 0.35
    np.testing.assert_array_equal(w.train.labels[~mask], true_labels[~mask])
    assert np.all(w.train.labels[mask] != true_labels[mask])


def test_shifted_clusters_ood_mode():
    w = generate_world(_cfg(ood_mode="shifted_clusters", ood_angle_deg=40.0, n_ood=77))
    assert w.ood.n == 77
    np.testing.assert_allclose(np.linalg.norm(w.ood.data, axis=1), 1.0, atol=1e-12)


def test_center_separation_failure_is_an_error():
    # 12 centers on a circle can only reach 30-degree spacing if perfectly
    # regular, which random draws never achieve
    with pytest.raises(ValidationError, match="separation"):
        generate_world(_cfg(m=2, n_clusters=12, per_cluster_n=5))


def test_config_validation():
    with pytest.raises(ValidationError):
        _cfg(m=1)
    with pytest.raises(ValidationError):
        _cfg(label_noise=1.0)
    with pytest.raises(ValidationError):
        _cfg(label_noise=0.1, n_clusters=1)
    with pytest.raises(ValidationError):
        _cfg(ood_mode="nope")
    with pytest.raises(ValidationError):
        _cfg(kappa=-2.0)
