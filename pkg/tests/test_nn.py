import numpy as np
import pytest

from shearbc import autodiff as ad
from shearbc.nn import (CheckpointError, MissingGradientError, ParamStore,
                        load_tensor_file, save_tensor_file)


def _store_with(name="w", shape=(3,), value=1.0):
    store = ParamStore()
    store.add(name, np.full(shape, value, dtype=np.float32))
    return store


def test_adam_requires_gradients():
    store = _store_with()
    with pytest.raises(MissingGradientError):
        store.adam_step(1e-3)


def test_adam_zero_gradient_leaves_parameters():
    store = _store_with()
    store.zero_grad()
    before = store.params["w"].data.copy()
    for _ in range(5):
        store.zero_grad()
        store.adam_step(1e-2)
    np.testing.assert_array_equal(store.params["w"].data, before)
    assert store.step == 5


def test_adam_constant_gradient_moves_against_sign():
    store = _store_with(value=0.0)
    for _ in range(50):
        store.zero_grad()
        store.params["w"].grad += 2.0
        store.adam_step(1e-2)
    assert np.all(store.params["w"].data < 0)


def test_adam_quadratic_bowl_decreases():
    store = ParamStore()
    w = store.add("w", np.array([3.0, -2.0], dtype=np.float32))
    losses = []
    for _ in range(300):
        store.zero_grad()
        loss = ad.mean_all(ad.square(w))
        ad.backward(loss)
        store.adam_step(1e-3)
        losses.append(float(loss.data))
    # monotone after warm-up
    tail = losses[20:]
    assert all(b <= a + 1e-9 for a, b in zip(tail, tail[1:]))
    assert losses[-1] < losses[0]


def test_duplicate_parameter_name_rejected():
    store = _store_with()
    with pytest.raises(ValueError, match="duplicate"):
        store.add("w", np.zeros(2))


def test_checkpoint_byte_exact_round_trip(tmp_path):
    store = ParamStore()
    rng = np.random.default_rng(3)
    store.add("a.w", rng.normal(size=(4, 5)))
    store.add("b.w", rng.normal(size=(7,)))
    store.zero_grad()
    store.params["a.w"].grad += 0.1
    store.params["b.w"].grad += 0.1
    store.adam_step(1e-3)

    p1 = tmp_path / "ck1.bin"
    p2 = tmp_path / "ck2.bin"
    store.save(p1, extra={"note": "x"})
    store2 = ParamStore()
    store2.add("a.w", np.zeros((4, 5)))
    store2.add("b.w", np.zeros(7))
    extra = store2.load(p1)
    assert extra == {"note": "x"}
    assert store2.step == store.step
    store2.save(p2, extra={"note": "x"})
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_corruption_detected(tmp_path):
    p = tmp_path / "ck.bin"
    save_tensor_file(p, {"w": np.ones(8, dtype=np.float32)})
    raw = bytearray(p.read_bytes())
    raw[-2] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_tensor_file(p)


def test_checkpoint_truncation_detected(tmp_path):
    p = tmp_path / "ck.bin"
    save_tensor_file(p, {"w": np.ones(8, dtype=np.float32)})
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_tensor_file(p)


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_tensor_file(p)


def test_checkpoint_shape_mismatch(tmp_path):
    p = tmp_path / "ck.bin"
    src = _store_with(shape=(3,))
    src.save(p)
    dst = _store_with(shape=(4,))
    with pytest.raises(CheckpointError, match="shape mismatch"):
        dst.load(p)
