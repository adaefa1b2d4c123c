import numpy as np
import pytest

from shearbc import autodiff as ad
from shearbc.nn import gradcheck


def _t(rng, shape):
    return ad.Tensor(rng.normal(size=shape), requires_grad=True)


def test_backward_rejects_rerun():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    loss = ad.mean_all(ad.square(x))
    ad.backward(loss)
    with pytest.raises(RuntimeError, match="already ran"):
        ad.backward(loss)


def test_backward_rejects_nonscalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.square(x))


def test_backward_rejects_nonfinite_loss():
    x = ad.Tensor(np.array([np.inf]), requires_grad=True)
    with pytest.raises(FloatingPointError):
        ad.backward(ad.mean_all(x))


def test_disconnected_parameter_gets_zero_gradient():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    unused = ad.Tensor(np.ones(4), requires_grad=True)
    unused.grad = np.zeros(4)
    ad.backward(ad.mean_all(ad.square(x)))
    assert np.array_equal(unused.grad, np.zeros(4))
    assert x.grad is not None


def test_simple_chain_rule():
    # loss = sum(w * x) with x fixed -> dloss/dw = x
    x = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
    w = ad.Tensor(np.array([[0.5], [1.5], [-2.0]]), requires_grad=True)
    loss = ad.sum_all(ad.matmul(ad.Tensor(x), w))
    ad.backward(loss)
    np.testing.assert_allclose(w.grad.ravel(), x.ravel())


def test_shape_errors_are_descriptive():
    a = ad.Tensor(np.ones((2, 3)))
    b = ad.Tensor(np.ones((3, 2)))
    with pytest.raises(ad.ShapeError, match="shape mismatch"):
        ad.add(a, b)
    with pytest.raises(ad.ShapeError, match="channel mismatch"):
        ad.conv2d(ad.Tensor(np.ones((1, 2, 5, 5))), ad.Tensor(np.ones((4, 3, 3, 3))),
                  ad.Tensor(np.ones(4)))
    with pytest.raises(ad.ShapeError, match="larger than input"):
        ad.conv2d(ad.Tensor(np.ones((1, 1, 2, 2))), ad.Tensor(np.ones((1, 1, 3, 3))),
                  ad.Tensor(np.ones(1)))


def test_no_grad_blocks_taping():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with ad.no_grad():
        y = ad.square(x)
    assert y._backward is None and y._prev == ()


def test_relu_masks_gradient():
    x = ad.Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    ad.backward(ad.sum_all(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


@pytest.mark.parametrize("op,shapes", [
    ("conv2d", [(2, 3, 6, 7), (4, 3, 3, 3), (4,)]),
    ("conv1d", [(2, 3, 4), (5, 3, 3), (5,)]),
    ("linear", [(3, 5), (5, 4), (4,)]),
    ("maxpool2d", [(2, 3, 6, 7)]),
    ("avgpool1d", [(2, 3, 4)]),
    ("upsample1d", [(2, 3, 4)]),
    ("film1d", [(2, 3, 4), (2, 3), (2, 3)]),
    ("channelnorm1d", [(2, 5, 4), (5,), (5,)]),
    ("exp", [(3, 4)]),
])
def test_gradcheck_each_op(op, shapes):
    rng = np.random.default_rng(hash(op) % 2**32)
    tensors = [_t(rng, s) for s in shapes]
    fn = getattr(ad, op)
    err = gradcheck(lambda *ts: ad.mean_all(ad.square(fn(*ts))), tensors)
    assert err < 1e-4


def test_gradcheck_concat_slice_fuse_path():
    rng = np.random.default_rng(9)
    a, b = _t(rng, (2, 3)), _t(rng, (2, 4))

    def fn(a, b):
        cat = ad.concat([a, b], axis=1)
        return ad.mean_all(ad.square(ad.slice_axis(cat, 1, 1, 6)))

    assert gradcheck(fn, [a, b]) < 1e-4
