import numpy as np
import pytest

from embcert.gmm import GmmFitConfig, fit_gmm
from embcert.synth import SynthConfig, generate_world


def unit_rows(rng, n, m):
    """Random unit-norm rows."""
    g = rng.normal(size=(n, m))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@pytest.fixture(scope="session")
def small_world():
    """A modest labeled world shared by read-only tests."""
    cfg = SynthConfig(
        m=8,
        n_clusters=5,
        per_cluster_n=150,
        kappa=15.0,
        label_noise=0.02,
        n_views=3,
        view_noise_sigma=0.05,
        per_cluster_test=40,
        n_ood=120,
        seed=11,
    )
    world = generate_world(cfg)
    # the eval tests need both downstream outcomes among the test samples
    assert 0 < sum(not r.correct for r in world.downstream) < len(world.downstream)
    return world


@pytest.fixture(scope="session")
def small_model(small_world):
    return fit_gmm(small_world.train, GmmFitConfig(n_comp=4, seed=21))
