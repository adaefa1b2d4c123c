"""Backend parity: the compiled core must match the numpy fallback."""

import numpy as np
import pytest

from shearbc import kernels
from shearbc.kernels import pure

try:
    from shearbc.kernels import _ck
    BACKENDS = [("pure", pure), ("cython", _ck)]
except ImportError:  # extension not built
    _ck = None
    BACKENDS = [("pure", pure)]

needs_ext = pytest.mark.skipif(_ck is None, reason="compiled kernels not built")


def test_backend_selected():
    assert kernels.BACKEND in ("pure", "cython")


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv2d_parity(dtype):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 6, 13, 18)).astype(dtype)
    w = rng.normal(size=(16, 6, 4, 4)).astype(dtype)
    b = rng.normal(size=16).astype(dtype)
    yp = pure.conv2d_forward(x, w, b)
    yc = _ck.conv2d_forward(x, w, b)
    np.testing.assert_allclose(yc, yp, rtol=2e-4, atol=1e-5)
    g = rng.normal(size=yp.shape).astype(dtype)
    for a, c in zip(pure.conv2d_backward(x, w, g), _ck.conv2d_backward(x, w, g)):
        np.testing.assert_allclose(c, a, rtol=2e-4, atol=1e-4)


@needs_ext
def test_conv1d_parity():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 4)).astype(np.float32)
    w = rng.normal(size=(7, 5, 3)).astype(np.float32)
    b = rng.normal(size=7).astype(np.float32)
    np.testing.assert_allclose(_ck.conv1d_forward(x, w, b),
                               pure.conv1d_forward(x, w, b), rtol=1e-5, atol=1e-6)
    g = rng.normal(size=(2, 7, 4)).astype(np.float32)
    for a, c in zip(pure.conv1d_backward(x, w, g), _ck.conv1d_backward(x, w, g)):
        np.testing.assert_allclose(c, a, rtol=1e-4, atol=1e-5)


@needs_ext
def test_maxpool_parity_and_tiebreak():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 10, 15)).astype(np.float32)
    op, ap = pure.maxpool2d_forward(x)
    oc, ac = _ck.maxpool2d_forward(x)
    np.testing.assert_array_equal(oc, op)
    np.testing.assert_array_equal(ac, ap)
    const = np.ones((1, 1, 4, 4), dtype=np.float32)
    for mod in (pure, _ck):
        _, arg = mod.maxpool2d_forward(const)
        assert np.all(arg == 0)  # first-index tie-break


@needs_ext
def test_block_match_parity_with_seeds():
    rng = np.random.default_rng(3)
    ref = rng.normal(size=(64, 84)).astype(np.float32)
    cur = np.roll(np.roll(ref, 2, axis=0), -1, axis=1)
    cy = np.array([20, 30, 40, 50], dtype=np.int64)
    cx = np.array([30, 40, 50, 60], dtype=np.int64)
    seed_y = np.array([1, 0, 2, -1], dtype=np.int64)
    seed_x = np.array([0, -1, 0, 1], dtype=np.int64)
    rp = pure.block_match(ref, cur, cy, cx, 4, 3, seed_y, seed_x)
    rc = _ck.block_match(ref, cur, cy, cx, 4, 3, seed_y, seed_x)
    np.testing.assert_array_equal(rc[0], rp[0])
    np.testing.assert_array_equal(rc[1], rp[1])
    finite = np.isfinite(rp[2])
    np.testing.assert_array_equal(np.isfinite(rc[2]), finite)
    np.testing.assert_allclose(rc[2][finite], rp[2][finite], rtol=1e-5)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_maxpool_odd_dims_floor(name, mod):
    x = np.arange(10 * 15, dtype=np.float32).reshape(1, 1, 10, 15)
    out, _ = mod.maxpool2d_forward(x)
    assert out.shape == (1, 1, 5, 7)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_conv2d_identity_kernel(name, mod):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 1, 5, 6)).astype(np.float32)
    w = np.ones((1, 1, 1, 1), dtype=np.float32)
    b = np.zeros(1, dtype=np.float32)
    np.testing.assert_allclose(mod.conv2d_forward(x, w, b), x, rtol=1e-6)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_conv1d_identity_stencil(name, mod):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 4)).astype(np.float32)
    w = np.zeros((3, 3, 3), dtype=np.float32)
    for c in range(3):
        w[c, c, 1] = 1.0
    out = mod.conv1d_forward(x, w, np.zeros(3, dtype=np.float32))
    np.testing.assert_allclose(out, x, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_conv1d_zero_padding_ends(name, mod):
    x = np.ones((1, 1, 4), dtype=np.float32)
    w = np.ones((1, 1, 3), dtype=np.float32)
    out = mod.conv1d_forward(x, w, np.zeros(1, dtype=np.float32))
    np.testing.assert_allclose(out[0, 0], [2.0, 3.0, 3.0, 2.0])
