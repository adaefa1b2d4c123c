import numpy as np
import pytest

from shearbc.tsne import tsne_embed


def _knn_purity(y, labels, k=5):
    d2 = ((y[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1)[:, :k]
    return float((labels[nn] == labels[:, None]).mean())


def test_separated_clusters_stay_separated():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 1, (100, 16))
    b = rng.normal(0, 1, (100, 16)) + 20.0   # 20 sigma apart
    x = np.vstack([a, b])
    labels = np.array([0] * 100 + [1] * 100)
    y = tsne_embed(x, perplexity=30, iterations=1000, seed=1)
    assert _knn_purity(y, labels) >= 0.95


def test_deterministic_for_fixed_seed():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 8))
    np.testing.assert_array_equal(tsne_embed(x, perplexity=10, iterations=300, seed=4),
                                  tsne_embed(x, perplexity=10, iterations=300, seed=4))


def test_single_point_at_origin():
    np.testing.assert_array_equal(tsne_embed(np.ones((1, 5))), np.zeros((1, 2)))


def test_perplexity_bound():
    with pytest.raises(ValueError, match="perplexity"):
        tsne_embed(np.random.default_rng(0).normal(size=(30, 4)), perplexity=15)


def test_point_cap():
    with pytest.raises(ValueError, match="capped"):
        tsne_embed(np.zeros((2001, 2)))


def test_identical_points_jittered_with_warning():
    with pytest.warns(UserWarning, match="jitter"):
        y = tsne_embed(np.ones((40, 3)), perplexity=5, iterations=50, seed=0)
    assert np.isfinite(y).all()


def test_embedding_is_centered():
    rng = np.random.default_rng(5)
    y = tsne_embed(rng.normal(size=(80, 6)), perplexity=12, iterations=250, seed=2)
    np.testing.assert_allclose(y.mean(axis=0), [0.0, 0.0], atol=1e-9)
