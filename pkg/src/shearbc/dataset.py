"""Demonstration episodes, training-pair windowing and on-disk persistence.

An episode directory holds a manifest plus one binary blob file per
episode; every blob is little-endian float32 (or uint8 flags) with a CRC32
recorded in the manifest. Round trips are byte-exact.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

DATASET_VERSION = 2
_BLOB_MAGIC = b"SBEP"


class DatasetError(RuntimeError):
    pass


class DatasetVersionError(DatasetError):
    pass


class DatasetChecksumError(DatasetError):
    pass


class DatasetTruncatedError(DatasetError):
    pass


@dataclass
class Episode:
    """Time-sampled demonstration record (one grasp session)."""

    dt: float
    duration: float
    demo_kind: str                  # "A-maneuver" | "B-place"
    seed: int
    embodiment: str
    nuisance: dict
    poses: np.ndarray               # (T, 2)
    commands: np.ndarray            # (T, 2)
    f_human: np.ndarray             # (T, 2)
    f_meas: np.ndarray              # (T, 2)
    grasp_force: np.ndarray         # (T, 2)
    shear: np.ndarray               # (T, H, W, 6)
    raw: np.ndarray | None          # (T, 6, Hi, Wi)
    slipped: bool = False
    bound_violation: bool = False
    status: str = "done"
    completion_t: float | None = None
    episode_id: str = ""

    @property
    def n_samples(self):
        return self.poses.shape[0]

    def validate(self):
        expect = int(np.floor(self.duration / self.dt + 1e-9)) + 1
        if self.n_samples != expect:
            raise DatasetError(
                f"sample count {self.n_samples} != floor(T_D/dt)+1 = {expect}")


def episode_from_ticks(ticks, dt, duration, demo_kind, seed, embodiment, nuisance,
                       status="done", completion_t=None, bound_violation=False):
    arr = lambda key: np.stack([np.asarray(getattr(t, key), dtype=np.float32) for t in ticks])
    raw = None
    if ticks and ticks[0].raw is not None:
        raw = np.stack([t.raw for t in ticks]).astype(np.float32)
    ep = Episode(
        dt=dt, duration=duration, demo_kind=demo_kind, seed=seed,
        embodiment=embodiment, nuisance=nuisance,
        poses=arr("pose"), commands=arr("cmd"), f_human=arr("f_human"),
        f_meas=arr("f_meas"), grasp_force=arr("grasp_force"),
        shear=np.stack([t.shear for t in ticks]).astype(np.float32),
        raw=raw, slipped=any(t.slipped for t in ticks), status=status,
        completion_t=completion_t, bound_violation=bound_violation)
    return ep


# ---------------------------------------------------------------------------
# training pairs

def pair_count(n_samples, t_a, t_o, t_tau):
    """Pairs an episode of n_samples ticks contributes (clamped at zero)."""
    return max(0, (n_samples - 1) - t_a - max(t_o, t_tau))


def sample_pairs(episode, t_a, t_o, t_tau, absolute_actions=None):
    """Windowed (observation, action-chunk) index pairs for one episode.

    Anchors t run over [max(t_o, t_tau), n-2-t_a]; the observation uses
    tactile/force frames [t-t_tau+1 .. t] and poses [t-t_o+1 .. t]; the
    chunk holds actions for steps t+1 .. t+t_a where a pose-correction
    action at step j is x_{j+1} - x_j and an absolute action is x_{j+1}.
    The first sample stays reserved as the tactile reference and the last
    as the terminal state, which makes the count exactly
    floor(T_D/dt) - t_a - max(t_o, t_tau).
    """
    if not (t_tau >= t_o >= 1):
        raise ValueError(f"need t_tau >= t_o >= 1, got t_tau={t_tau}, t_o={t_o}")
    if t_a < 0:
        raise ValueError(f"negative action horizon {t_a}")
    if absolute_actions is None:
        absolute_actions = episode.demo_kind.startswith("B")
    n = episode.n_samples
    pairs = []
    for t in range(max(t_o, t_tau), n - 1 - t_a):
        tac = np.arange(t - t_tau + 1, t + 1)
        pro = np.arange(t - t_o + 1, t + 1)
        steps = np.arange(t + 1, t + 1 + t_a)
        if absolute_actions:
            actions = episode.poses[steps + 1] if t_a else np.zeros((0, 2), np.float32)
        else:
            actions = (episode.poses[steps + 1] - episode.poses[steps]) if t_a \
                else np.zeros((0, 2), np.float32)
        pairs.append(TrainPair(episode_index=-1, anchor=t, tactile_idx=tac,
                               proprio_idx=pro, actions=actions.astype(np.float32)))
    expected = pair_count(n, t_a, t_o, t_tau)
    assert len(pairs) == expected, (len(pairs), expected)
    return pairs


@dataclass
class TrainPair:
    episode_index: int
    anchor: int
    tactile_idx: np.ndarray
    proprio_idx: np.ndarray
    actions: np.ndarray             # (t_a, 2) normalized later


# ---------------------------------------------------------------------------
# normalization

@dataclass
class NormStats:
    """Training-split normalization constants, persisted with checkpoints."""

    tactile_m: float
    tactile_d: float
    pose_min: list
    pose_max: list
    action_min: list
    action_max: list
    force_min: list
    force_max: list

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_json(d):
        return NormStats(**{k: d[k] for k in NormStats.__dataclass_fields__})


def _component_range(arr):
    lo = arr.reshape(-1, arr.shape[-1]).min(axis=0)
    hi = arr.reshape(-1, arr.shape[-1]).max(axis=0)
    if np.any(hi - lo <= 1e-12):
        raise ValueError("degenerate component range (min == max)")
    return [float(v) for v in lo], [float(v) for v in hi]


def compute_norm_stats(episodes, pairs_by_episode):
    """Stats over the training split only (episodes list already filtered)."""
    from .flow import shear_norm_stats

    m, d = shear_norm_stats(np.concatenate([ep.shear for ep in episodes]))
    poses = np.concatenate([ep.poses for ep in episodes])
    forces = np.concatenate([ep.f_meas for ep in episodes])
    actions = np.concatenate(
        [p.actions for pairs in pairs_by_episode for p in pairs]) if pairs_by_episode else None
    if actions is None or actions.size == 0:
        raise ValueError("no actions to normalize")
    pmin, pmax = _component_range(poses)
    amin, amax = _component_range(actions)
    fmin, fmax = _component_range(forces)
    return NormStats(tactile_m=m, tactile_d=d, pose_min=pmin, pose_max=pmax,
                     action_min=amin, action_max=amax, force_min=fmin, force_max=fmax)


def normalize_component(x, lo, hi, clamp=True):
    lo = np.asarray(lo, dtype=np.float32)
    hi = np.asarray(hi, dtype=np.float32)
    if np.any(hi - lo <= 1e-12):
        raise ValueError("degenerate component range (min == max)")
    out = 2.0 * (np.asarray(x, dtype=np.float32) - lo) / (hi - lo) - 1.0
    if clamp:
        out = np.clip(out, -1.0, 1.0)
    return out


def denormalize_component(x, lo, hi):
    lo = np.asarray(lo, dtype=np.float32)
    hi = np.asarray(hi, dtype=np.float32)
    return (np.asarray(x, dtype=np.float32) + 1.0) * 0.5 * (hi - lo) + lo


def split_episodes(n_episodes, val_fraction=0.2, seed=0):
    """Deterministic by-episode train/validation split."""
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n_episodes)
    n_val = max(1, int(round(val_fraction * n_episodes))) if n_episodes > 1 else 0
    val = set(order[:n_val].tolist())
    train = [i for i in range(n_episodes) if i not in val]
    return train, sorted(val)


# ---------------------------------------------------------------------------
# augmentation

def bilinear_resize(img, out_hw):
    """(C, H, W) -> (C, out_h, out_w) bilinear, align-corners-false style."""
    c, h, w = img.shape
    oh, ow = out_hw
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(img.dtype)


def random_crop_augment(raw, rng, fraction=0.95):
    """Crop to fraction of each spatial dim (uniform offset), resize back.

    Used only when training the raw-image policy; the shear-field and
    force policies get no augmentation.
    """
    c, h, w = raw.shape
    ch, cw = int(np.floor(h * fraction)), int(np.floor(w * fraction))
    oy = int(rng.integers(0, h - ch + 1))
    ox = int(rng.integers(0, w - cw + 1))
    crop = raw[:, oy : oy + ch, ox : ox + cw]
    return bilinear_resize(crop, (h, w))


# ---------------------------------------------------------------------------
# on-disk format

def _write_blobs(path, arrays):
    entries = []
    with open(path, "wb") as f:
        f.write(_BLOB_MAGIC)
        offset = 4
        for name, arr in arrays.items():
            if arr is None:
                continue
            if arr.dtype == np.float32:
                raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
                dtype = "<f4"
            else:
                raw = np.ascontiguousarray(arr).tobytes()
                dtype = arr.dtype.str
            f.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                            "offset": offset, "nbytes": len(raw),
                            "crc32": zlib.crc32(raw)})
            offset += len(raw)
    return entries


def _read_blobs(path, entries):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _BLOB_MAGIC:
        raise DatasetError(f"not an episode blob file: {path}")
    out = {}
    for e in entries:
        lo, hi = e["offset"], e["offset"] + e["nbytes"]
        if hi > len(data):
            raise DatasetTruncatedError(f"truncated blob {e['name']} in {path}")
        raw = data[lo:hi]
        if zlib.crc32(raw) != e["crc32"]:
            raise DatasetChecksumError(f"checksum mismatch for {e['name']} in {path}")
        out[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return out


def save_dataset(episodes, path, extra=None):
    os.makedirs(path, exist_ok=True)
    manifest = {"version": DATASET_VERSION, "episodes": [], "extra": extra or {}}
    for i, ep in enumerate(episodes):
        ep_id = ep.episode_id or f"ep{i:04d}"
        fname = f"{ep_id}.bin"
        arrays = {"poses": ep.poses, "commands": ep.commands, "f_human": ep.f_human,
                  "f_meas": ep.f_meas, "grasp_force": ep.grasp_force, "shear": ep.shear}
        if ep.raw is not None:
            arrays["raw"] = ep.raw
        entries = _write_blobs(os.path.join(path, fname), arrays)
        manifest["episodes"].append({
            "id": ep_id, "file": fname, "dt": ep.dt, "duration": ep.duration,
            "n_samples": ep.n_samples, "demo_kind": ep.demo_kind, "seed": ep.seed,
            "embodiment": ep.embodiment, "nuisance": ep.nuisance,
            "slipped": ep.slipped, "status": ep.status,
            "bound_violation": ep.bound_violation,
            "completion_t": ep.completion_t, "blobs": entries,
        })
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_dataset(path, with_raw=True):
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise DatasetError(f"no manifest.json under {path}")
    with open(mpath) as f:
        manifest = json.load(f)
    if manifest.get("version") != DATASET_VERSION:
        raise DatasetVersionError(
            f"dataset version {manifest.get('version')} != {DATASET_VERSION}")
    episodes = []
    for entry in manifest["episodes"]:
        blobs = entry["blobs"]
        if not with_raw:
            blobs = [b for b in blobs if b["name"] != "raw"]
        arrays = _read_blobs(os.path.join(path, entry["file"]), blobs)
        episodes.append(Episode(
            dt=entry["dt"], duration=entry["duration"], demo_kind=entry["demo_kind"],
            seed=entry["seed"], embodiment=entry["embodiment"], nuisance=entry["nuisance"],
            poses=arrays["poses"], commands=arrays["commands"], f_human=arrays["f_human"],
            f_meas=arrays["f_meas"], grasp_force=arrays["grasp_force"],
            shear=arrays["shear"], raw=arrays.get("raw"), slipped=entry["slipped"],
            status=entry["status"], bound_violation=entry["bound_violation"],
            completion_t=entry["completion_t"], episode_id=entry["id"]))
    return episodes, manifest.get("extra", {})
