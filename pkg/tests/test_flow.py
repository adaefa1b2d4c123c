import numpy as np
import pytest

from shearbc import flow, tactile


@pytest.fixture(scope="module")
def frames():
    right = tactile.SensorModel(mirror=+1.0, layout_seed=29)
    nu = tactile.SessionNuisance()
    u0 = right.displacement((0.0, 0.0), 2.0)
    ref = tactile.render(right, u0, nu)
    return right, nu, u0, ref


def test_identity_zero_flow(frames):
    _, _, _, ref = frames
    vx, vy, low = flow.optical_flow(ref, ref.copy())
    assert not low
    assert np.abs(vx).max() < 0.25 and np.abs(vy).max() < 0.25


def test_integer_shift_recovery_interior(frames):
    right, nu, u0, ref = frames
    cur = tactile.render(right, u0 + np.array([3.0, -2.0]), nu)
    vx, vy, _ = flow.optical_flow(ref, cur)
    inner = (slice(1, -1), slice(1, -1))
    assert np.abs(vx[inner] + 2.0).max() < 0.25
    assert np.abs(vy[inner] - 3.0).max() < 0.25


def test_rendered_load_recovers_gain(frames):
    right, nu, u0, ref = frames
    ut = right.displacement((1.0, 0.0), 2.0)
    cur = tactile.render(right, ut, nu)
    vx, _, _ = flow.optical_flow(ref, cur)
    expected = (ut - u0).mean(axis=0)[1]
    assert abs(vx.mean() - expected) / abs(expected) < 0.10


def test_degenerate_images_flagged():
    img = np.full((64, 84, 3), 0.5, dtype=np.float32)
    vx, vy, low = flow.optical_flow(img, img)
    assert low
    assert np.all(vx == 0) and np.all(vy == 0)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shapes differ"):
        flow.optical_flow(np.zeros((10, 10)), np.zeros((12, 10)))


def test_seeded_search_matches_full(frames):
    right, nu, u0, ref = frames
    cur = tactile.render(right, right.displacement((2.0, -1.0), 2.0), nu)
    vx_f, vy_f, _ = flow.optical_flow(ref, cur)
    seed = (np.rint(vy_f).astype(np.int64), np.rint(vx_f).astype(np.int64))
    vx_s, vy_s, _ = flow.optical_flow(ref, cur, seed=seed)
    np.testing.assert_allclose(vx_s, vx_f, atol=1e-5)
    np.testing.assert_allclose(vy_s, vy_f, atol=1e-5)


def test_divergence_uniform_field_zero():
    v = np.full((13, 18), 2.5, dtype=np.float32)
    np.testing.assert_allclose(flow.divergence(v, v), 0.0, atol=1e-6)


def test_divergence_linear_field():
    yy, xx = np.mgrid[0:13, 0:18].astype(np.float32)
    div = flow.divergence(xx, yy)  # v = (x, y) -> div = 2
    np.testing.assert_allclose(div, 2.0, atol=1e-5)


def test_divergence_rotation_zero():
    yy, xx = np.mgrid[0:13, 0:18].astype(np.float32)
    div = flow.divergence(-yy, xx)
    np.testing.assert_allclose(div, 0.0, atol=1e-5)


def test_shear_field_channel_order_and_swap():
    mk = lambda v: tuple(np.full((13, 18), v, dtype=np.float32) for _ in range(3))
    left = (np.full((13, 18), 1.0, np.float32), np.full((13, 18), 2.0, np.float32),
            np.full((13, 18), 3.0, np.float32))
    right = (np.full((13, 18), 4.0, np.float32), np.full((13, 18), 5.0, np.float32),
             np.full((13, 18), 6.0, np.float32))
    sf = flow.shear_field(left, right)
    assert sf.shape == (13, 18, 6)
    np.testing.assert_array_equal(sf[0, 0], [1, 2, 3, 4, 5, 6])
    swapped = flow.shear_field(right, left)
    np.testing.assert_array_equal(swapped[..., :3], sf[..., 3:])
    np.testing.assert_array_equal(swapped[..., 3:], sf[..., :3])
    with pytest.raises(ValueError, match="both pads"):
        flow.shear_field(None, right)


def test_zero_inputs_zero_field():
    z = tuple(np.zeros((13, 18), np.float32) for _ in range(3))
    assert not flow.shear_field(z, z).any()


def test_normalize_shear_mapping_and_clamp():
    batch = np.zeros((1, 2, 2, 6), dtype=np.float32)
    batch[..., 0] = 2.0
    batch[..., 2] = -1.0
    out = flow.normalize_shear(batch, v_max=4.0, d_max=2.0)
    np.testing.assert_allclose(out[..., 0], 0.5)
    np.testing.assert_allclose(out[..., 2], -0.5)
    # endpoint and clamp
    batch[..., 1] = -4.0
    batch[..., 4] = 6.0
    out = flow.normalize_shear(batch, v_max=4.0, d_max=2.0)
    np.testing.assert_allclose(out[..., 1], -1.0)
    np.testing.assert_allclose(out[..., 4], 1.0)


def test_norm_stats_reject_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        flow.shear_norm_stats(np.zeros((3, 2, 2, 6)))
