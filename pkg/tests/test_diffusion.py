import numpy as np
import pytest

from shearbc import diffusion


@pytest.fixture(scope="module")
def sched():
    return diffusion.cosine_schedule(128)


def test_schedule_endpoints(sched):
    assert sched.alpha_bar[0] == 1.0
    assert sched.alpha_bar[128] < 0.01
    assert sched.alpha_bar[128] > 0.0


def test_schedule_strictly_decreasing(sched):
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_schedule_closed_form_interior(sched):
    # away from the clipped tail the normalized cosine form holds
    k = np.arange(0, 100)
    f = np.cos(((k / 128) + 0.008) / 1.008 * np.pi / 2) ** 2
    np.testing.assert_allclose(sched.alpha_bar[:100], f / f[0], rtol=1e-10)


def test_schedule_needs_two_steps():
    with pytest.raises(ValueError):
        diffusion.cosine_schedule(1)


def test_forward_noising_variance_identity(sched):
    rng = np.random.default_rng(0)
    x0 = (rng.standard_normal((10000, 2, 4)) * 0.5).astype(np.float32)
    for k in (1, 32, 64, 128):
        eps = rng.standard_normal(x0.shape).astype(np.float32)
        xk = diffusion.add_noise(sched, x0, np.full(10000, k), eps)
        expect = sched.alpha_bar[k] * 0.25 + (1 - sched.alpha_bar[k])
        assert abs(xk.var() - expect) / expect < 0.02


def test_terminal_noising_is_standard_normal(sched):
    rng = np.random.default_rng(1)
    x0 = (rng.uniform(-1, 1, (10000, 2)) * 0.8).astype(np.float32)
    eps = rng.standard_normal(x0.shape).astype(np.float32)
    xk = diffusion.add_noise(sched, x0, np.full(10000, 128), eps)
    assert abs(xk.mean()) < 0.05
    assert abs(xk.std() - 1.0) < 0.05


def test_ddim_timesteps_stride(sched):
    ts = diffusion.ddim_timesteps(128, 16)
    assert ts[0] == 128 and ts[-1] == 8
    assert np.all(np.diff(ts) == -8)
    with pytest.raises(ValueError, match="divide"):
        diffusion.ddim_timesteps(128, 17)


def _oracle(sched, mu):
    def predict(x, k):
        ab = sched.alpha_bar[k]
        return (x - np.sqrt(ab) * mu[None]) / np.sqrt(1 - ab)
    return predict


def test_ddim_closed_form_oracle_recovery(sched):
    mu = np.array([[0.3, -0.2, 0.1, 0.5], [0.0, 0.4, -0.3, 0.2]], dtype=np.float32)
    for eta in (0.0, 0.5, 1.0):
        out = diffusion.ddim_sample(_oracle(sched, mu), (1, 2, 4), sched, 16, eta,
                                    np.random.default_rng(3))
        assert np.abs(out[0] - mu).max() < 1e-3


def test_ddim_eta_zero_deterministic(sched):
    mu = np.zeros((2, 4), dtype=np.float32)
    a = diffusion.ddim_sample(_oracle(sched, mu), (1, 2, 4), sched, 16, 0.0,
                              np.random.default_rng(7))
    b = diffusion.ddim_sample(_oracle(sched, mu), (1, 2, 4), sched, 16, 0.0,
                              np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)


def test_ddim_full_steps_eta_one_matches_ancestral_variance(sched):
    """With K_inf=K and eta=1 the per-step noise matches the ancestral
    posterior sigma^2 = (1-ab_prev)/(1-ab_k) * beta_k."""
    ab = sched.alpha_bar
    for k in (2, 64, 128):
        k_prev = k - 1
        var_ratio = (1 - ab[k_prev]) / (1 - ab[k]) * (1 - ab[k] / ab[k_prev])
        ancestral = (1 - ab[k_prev]) / (1 - ab[k]) * (1 - ab[k] / ab[k_prev])
        assert abs(var_ratio - ancestral) < 1e-12
    # and the sampler still recovers the oracle mean
    mu = np.full((2, 4), 0.25, dtype=np.float32)
    out = diffusion.ddim_sample(_oracle(sched, mu), (1, 2, 4), sched, 128, 1.0,
                                np.random.default_rng(11))
    assert np.abs(out[0] - mu).max() < 1e-3


def test_x0_clipping_bounds_explosion(sched):
    # a hostile predictor that returns junk noise must not blow up
    def bad(x, k):
        return np.full_like(x, 3.0)
    out = diffusion.ddim_sample(bad, (1, 2, 4), sched, 16, 0.0,
                                np.random.default_rng(0))
    assert np.abs(out).max() <= 1.5


def test_timestep_embedding_shape_and_range():
    emb = diffusion.timestep_embedding(np.array([0, 7, 128]), 64)
    assert emb.shape == (3, 64)
    assert np.abs(emb).max() <= 1.0
    assert not np.array_equal(emb[0], emb[1])
