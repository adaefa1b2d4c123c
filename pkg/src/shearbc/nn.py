"""Parameter store, Adam optimizer, layer modules and checkpoint files."""

import json
import struct
import zlib

import numpy as np

from . import autodiff as ad

CHECKPOINT_MAGIC = b"SBCKPT01"


class MissingGradientError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


class ParamStore:
    """Named trainable tensors plus per-parameter Adam moments.

    One training loop owns a store at a time; the optimizer step and the
    moment arrays are keyed by parameter name.
    """

    def __init__(self):
        self.params = {}
        self.m = {}
        self.v = {}
        self.step = 0

    def add(self, name, init_array):
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        arr = np.ascontiguousarray(init_array, dtype=np.float32)
        t = ad.Tensor(arr, requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return t

    def zero_grad(self):
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def grad_norm(self):
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        return total ** 0.5

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Standard Adam with bias correction; requires populated gradients."""
        missing = [n for n, t in self.params.items() if t.grad is None]
        if missing:
            raise MissingGradientError(f"no gradient for parameters: {missing[:4]}")
        self.step += 1
        t = self.step
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(np.float32)

    def n_parameters(self):
        return sum(int(t.data.size) for t in self.params.values())

    # -- checkpoint file: JSON manifest + little-endian float32 blobs -------

    def save(self, path, extra=None, include_moments=True):
        tensors = {}
        for name, t in self.params.items():
            tensors[name] = np.ascontiguousarray(t.data, dtype="<f4")
        if include_moments:
            for name in self.params:
                tensors[f"adam.m.{name}"] = np.ascontiguousarray(self.m[name], dtype="<f4")
                tensors[f"adam.v.{name}"] = np.ascontiguousarray(self.v[name], dtype="<f4")
        save_tensor_file(path, tensors, step=self.step, extra=extra)

    def load(self, path):
        """Restore parameters and moments in place; shapes must match."""
        tensors, step, extra = load_tensor_file(path)
        for name, t in self.params.items():
            if name not in tensors:
                raise CheckpointError(f"checkpoint missing parameter {name}")
            arr = tensors[name]
            if arr.shape != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()
            mk, vk = f"adam.m.{name}", f"adam.v.{name}"
            if mk in tensors:
                self.m[name] = tensors[mk].copy()
            if vk in tensors:
                self.v[name] = tensors[vk].copy()
        self.step = step
        return extra


def save_tensor_file(path, tensors, step=0, extra=None):
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = {"version": 1, "step": int(step), "tensors": entries}
    if extra is not None:
        manifest["extra"] = extra
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_tensor_file(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        manifest = json.loads(data[12 : 12 + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint manifest: {exc}") from exc
    if manifest.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version: {manifest.get('version')}")
    base = 12 + hlen
    tensors = {}
    for e in manifest["tensors"]:
        lo, hi = base + e["offset"], base + e["offset"] + e["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"truncated blob for tensor {e['name']}")
        raw = data[lo:hi]
        if zlib.crc32(raw) != e["crc32"]:
            raise CheckpointError(f"checksum mismatch for tensor {e['name']}")
        tensors[e["name"]] = np.frombuffer(raw, dtype="<f4").reshape(e["shape"]).copy()
    return tensors, manifest["step"], manifest.get("extra")


# ---------------------------------------------------------------------------
# layers

class Linear:
    def __init__(self, store, name, n_in, n_out, rng, final=False):
        scale = 1.0 / np.sqrt(n_in) if final else np.sqrt(2.0 / n_in)
        self.w = store.add(f"{name}.w", rng.normal(0.0, scale, size=(n_in, n_out)))
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def __call__(self, x):
        return ad.linear(x, self.w, self.b)


class Conv2d:
    def __init__(self, store, name, c_in, c_out, k, rng):
        scale = np.sqrt(2.0 / (c_in * k * k))
        self.w = store.add(f"{name}.w", rng.normal(0.0, scale, size=(c_out, c_in, k, k)))
        self.b = store.add(f"{name}.b", np.zeros(c_out))

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b)


class Conv1d:
    def __init__(self, store, name, c_in, c_out, k, rng, final=False):
        scale = 1.0 / np.sqrt(c_in * k) if final else np.sqrt(2.0 / (c_in * k))
        self.w = store.add(f"{name}.w", rng.normal(0.0, scale, size=(c_out, c_in, k)))
        self.b = store.add(f"{name}.b", np.zeros(c_out))

    def __call__(self, x):
        return ad.conv1d(x, self.w, self.b)


class ChannelNorm1d:
    def __init__(self, store, name, channels):
        self.g = store.add(f"{name}.g", np.ones(channels))
        self.b = store.add(f"{name}.b", np.zeros(channels))

    def __call__(self, x):
        return ad.channelnorm1d(x, self.g, self.b)


def gradcheck(fn, tensors, eps=1e-3, rtol=1e-4):
    """Central finite-difference check of fn's gradient w.r.t. each tensor.

    fn maps the tensors to a scalar-loss Tensor. Inputs should be float64
    for the stated tolerance to be meaningful. Returns max relative error.
    """
    loss = fn(*tensors)
    ad.backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn(*tensors).data)
            flat[i] = orig - eps
            lo = float(fn(*tensors).data)
            flat[i] = orig
            fd[i] = (hi - lo) / (2 * eps)
        fd = fd.reshape(t.data.shape)
        rel = np.abs(analytic - fd) / (np.abs(fd) + 1e-8)
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
        if worst > rtol:
            idx = np.unravel_index(rel.argmax(), rel.shape)
            raise AssertionError(
                f"gradcheck failed: rel err {worst:.3e} at {idx}, "
                f"analytic={analytic[idx]:.6e} fd={fd[idx]:.6e}")
    return worst
