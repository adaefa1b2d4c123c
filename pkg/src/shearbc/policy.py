"""Observation encoders, feature fusion, diffusion policy training and the
rollout controller for the three feedback modalities."""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dataset as ds
from . import diffusion
from .nn import Conv2d, Linear, ParamStore
from .seeding import derive_rng
from .unet1d import ConditionalUNet1d

MODALITIES = ("shear", "force", "raw")
TACTILE_FEATURE = 128
FORCE_FEATURE = 32
PROPRIO_FEATURE = 32


class TrainingDivergedError(RuntimeError):
    pass


def conv_stack_output(hw):
    """Spatial size after two (valid 4x4 conv, 2x2 pool) stages."""
    h, w = hw
    for _ in range(2):
        h, w = (h - 4 + 1) // 2, (w - 4 + 1) // 2
        if h < 1 or w < 1:
            raise ValueError(f"input {hw} too small for two conv/pool stages")
    return h, w


def tactile_cnn_param_count(hw, channels=6):
    """Closed-form parameter count of the two-conv tactile encoder."""
    h, w = conv_stack_output(hw)
    flat = 32 * h * w
    return (16 * channels * 16 + 16) + (32 * 16 * 16 + 32) + (flat * 128 + 128)


class TactileCNN:
    """Two conv/pool stages then a linear feature head (the layer recipe
    shared by the shear-field and raw-image encoders)."""

    def __init__(self, store, name, in_hw, rng, channels=6):
        self.conv1 = Conv2d(store, f"{name}.conv1", channels, 16, 4, rng)
        self.conv2 = Conv2d(store, f"{name}.conv2", 16, 32, 4, rng)
        h, w = conv_stack_output(in_hw)
        self.flat = 32 * h * w
        self.head = Linear(store, f"{name}.head", self.flat, TACTILE_FEATURE, rng, final=True)

    def __call__(self, x):
        h = ad.maxpool2d(ad.relu(self.conv1(x)))
        h = ad.maxpool2d(ad.relu(self.conv2(h)))
        return self.head(ad.reshape(h, (x.data.shape[0], self.flat)))


def fused_width(tactile_feature, t_o, t_tau, proprio_feature=PROPRIO_FEATURE):
    return t_o * (tactile_feature + proprio_feature) + (t_tau - t_o) * tactile_feature


def fuse_observation(tactile_feats, proprio_feats, t_o, t_tau):
    """Concatenate per-step features newest-first, proprio interleaved for
    the first t_o steps. tactile_feats: Tensor (B, t_tau*F) time-ascending
    blocks; proprio_feats: Tensor (B, t_o*P) time-ascending blocks."""
    if t_tau < t_o or t_o < 1:
        raise ValueError(f"need t_tau >= t_o >= 1, got {t_tau}, {t_o}")
    fdim = tactile_feats.data.shape[1] // t_tau
    pdim = proprio_feats.data.shape[1] // t_o
    parts = []
    for i in range(t_tau):
        ti = t_tau - 1 - i
        parts.append(ad.slice_axis(tactile_feats, 1, ti * fdim, (ti + 1) * fdim))
        if i < t_o:
            pi = t_o - 1 - i
            parts.append(ad.slice_axis(proprio_feats, 1, pi * pdim, (pi + 1) * pdim))
    return ad.concat(parts, axis=1)


@dataclass
class Horizons:
    t_a: int = 4
    t_o: int = 1
    t_tau: int = 4
    t_e: int = 2

    def __post_init__(self):
        if not (self.t_tau >= self.t_o >= 1):
            raise ValueError("need t_tau >= t_o >= 1")
        if not (1 <= self.t_e <= self.t_a):
            raise ValueError("need 1 <= t_e <= t_a")


class PolicyNet:
    """Encoders + conditional U-Net + schedule for one feedback modality."""

    def __init__(self, modality, obs_hw, horizons, seed, steps=128,
                 unet_widths=(64, 128, 256), demo_kind="A-maneuver"):
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        self.modality = modality
        self.obs_hw = tuple(obs_hw) if obs_hw else None
        self.horizons = horizons
        self.seed = seed
        self.demo_kind = demo_kind
        self.unet_widths = tuple(unet_widths)
        self.store = ParamStore()
        self.norm = None
        rng = derive_rng(seed, "init", modality)

        if modality in ("shear", "raw"):
            self.tactile_feature = TACTILE_FEATURE
            self.encoder = TactileCNN(self.store, "enc", obs_hw, rng)
        else:
            self.tactile_feature = FORCE_FEATURE
            self.encoder = Linear(self.store, "enc.ffc", 2, FORCE_FEATURE, rng, final=True)
        self.p_fc = Linear(self.store, "enc.pfc", 2, PROPRIO_FEATURE, rng, final=True)
        self.cond_dim = fused_width(self.tactile_feature, horizons.t_o, horizons.t_tau)
        self.unet = ConditionalUNet1d(self.store, "unet", 2, horizons.t_a,
                                      self.cond_dim, rng, widths=self.unet_widths)
        self.schedule = diffusion.cosine_schedule(steps)

    # -- observation encoding ------------------------------------------

    def encode(self, tactile, proprio):
        """tactile: (B, t_tau, ...) normalized; proprio: (B, t_o, 2) normalized."""
        h = self.horizons
        b = tactile.shape[0]
        if self.modality in ("shear", "raw"):
            frames = tactile.reshape((b * h.t_tau,) + tactile.shape[2:])
            feats = self.encoder(ad.Tensor(frames))
        else:
            feats = self.encoder(ad.Tensor(tactile.reshape(b * h.t_tau, 2)))
        feats = ad.reshape(feats, (b, h.t_tau * self.tactile_feature))
        pf = self.p_fc(ad.Tensor(proprio.reshape(b * h.t_o, 2)))
        pf = ad.reshape(pf, (b, h.t_o * PROPRIO_FEATURE))
        return fuse_observation(feats, pf, h.t_o, h.t_tau)

    def tactile_latent(self, tactile_frames):
        """Per-frame encoder features (used by the shift analysis)."""
        with ad.no_grad():
            if self.modality in ("shear", "raw"):
                return self.encoder(ad.Tensor(tactile_frames)).data.copy()
            return self.encoder(ad.Tensor(tactile_frames.reshape(-1, 2))).data.copy()

    # -- training ------------------------------------------------------

    def train_step(self, batch, rng, lr, beta1=0.9, beta2=0.999):
        """One DDPM step: noise the chunk, regress the noise, Adam update."""
        actions = batch["actions"]          # (B, t_a, 2) normalized
        b = actions.shape[0]
        a0 = np.ascontiguousarray(np.moveaxis(actions, 1, 2))  # (B, 2, t_a)
        k = rng.integers(1, self.schedule.steps + 1, size=b)
        eps = rng.standard_normal(a0.shape).astype(np.float32)
        a_k = diffusion.add_noise(self.schedule, a0, k, eps)
        z = self.encode(batch["tactile"], batch["proprio"])
        eps_hat = self.unet(ad.Tensor(a_k), z, k)
        loss = ad.mse(eps_hat, eps)
        self.store.zero_grad()
        ad.backward(loss)
        self.store.adam_step(lr, beta1=beta1, beta2=beta2)
        return float(loss.data)

    def eval_loss(self, batch, rng):
        actions = batch["actions"]
        b = actions.shape[0]
        a0 = np.ascontiguousarray(np.moveaxis(actions, 1, 2))
        k = rng.integers(1, self.schedule.steps + 1, size=b)
        eps = rng.standard_normal(a0.shape).astype(np.float32)
        a_k = diffusion.add_noise(self.schedule, a0, k, eps)
        with ad.no_grad():
            z = self.encode(batch["tactile"], batch["proprio"])
            eps_hat = self.unet(ad.Tensor(a_k), z, k)
            return float(ad.mse(eps_hat, eps).data)

    # -- sampling ------------------------------------------------------

    def sample_chunk(self, tactile, proprio, rng, k_inf=16, eta=0.5):
        """DDIM-sample one normalized action chunk (t_a, 2) for a single
        observation window (no batch dim)."""
        with ad.no_grad():
            z = self.encode(tactile[None], proprio[None])

            def predict_eps(x, k):
                with ad.no_grad():
                    return self.unet(ad.Tensor(x), z, np.array([k])).data

            chunk = diffusion.ddim_sample(predict_eps, (1, 2, self.horizons.t_a),
                                          self.schedule, k_inf, eta, rng)
        return np.clip(np.moveaxis(chunk[0], 0, 1), -1.0, 1.0)

    # -- persistence ----------------------------------------------------

    def sidecar(self):
        return {
            "modality": self.modality,
            "obs_hw": list(self.obs_hw) if self.obs_hw else None,
            "horizons": {"t_a": self.horizons.t_a, "t_o": self.horizons.t_o,
                         "t_tau": self.horizons.t_tau, "t_e": self.horizons.t_e},
            "steps": self.schedule.steps,
            "unet_widths": list(self.unet_widths),
            "seed": self.seed,
            "demo_kind": self.demo_kind,
            "norm": self.norm.to_json() if self.norm else None,
        }

    def save(self, path):
        self.store.save(path, extra={"kind": "policy"})
        with open(path + ".json", "w") as f:
            json.dump(self.sidecar(), f, indent=1, sort_keys=True)

    @staticmethod
    def load(path):
        with open(path + ".json") as f:
            side = json.load(f)
        h = Horizons(**side["horizons"])
        net = PolicyNet(side["modality"],
                        tuple(side["obs_hw"]) if side["obs_hw"] else None,
                        h, side["seed"], steps=side["steps"],
                        unet_widths=tuple(side["unet_widths"]),
                        demo_kind=side["demo_kind"])
        net.store.load(path)
        if side["norm"]:
            net.norm = ds.NormStats.from_json(side["norm"])
        return net


# ---------------------------------------------------------------------------
# batch assembly

class PairSampler:
    """Materializes normalized training batches from episodes + pairs.

    Raw frames are cached quantized (uint8) to bound memory; shear fields
    and forces are cached normalized float32.
    """

    def __init__(self, episodes, pairs, modality, norm, augment=False, augment_seed=0):
        from .flow import normalize_shear

        self.modality = modality
        self.norm = norm
        self.augment = augment
        self._aug_rng = derive_rng(augment_seed, "crop")
        self.pairs = pairs
        self._pose = [ds.normalize_component(ep.poses, norm.pose_min, norm.pose_max)
                      for ep in episodes]
        if modality == "shear":
            self._tac = [normalize_shear(ep.shear, norm.tactile_m, norm.tactile_d)
                         .transpose(0, 3, 1, 2).copy() for ep in episodes]
        elif modality == "raw":
            self._tac = [np.round(ep.raw * 255.0).astype(np.uint8) for ep in episodes]
        else:
            self._tac = [ds.normalize_component(ep.f_meas, norm.force_min, norm.force_max)
                         for ep in episodes]

    def __len__(self):
        return len(self.pairs)

    def batch(self, indices):
        tac, pro, act = [], [], []
        for i in indices:
            p = self.pairs[i]
            e = p.episode_index
            frames = self._tac[e][p.tactile_idx]
            if self.modality == "raw":
                frames = frames.astype(np.float32) / 255.0
                if self.augment:
                    frames = np.stack([ds.random_crop_augment(f, self._aug_rng)
                                       for f in frames])
                frames = frames * 2.0 - 1.0
            tac.append(frames)
            pro.append(self._pose[e][p.proprio_idx])
            act.append(ds.normalize_component(p.actions, self.norm.action_min,
                                              self.norm.action_max, clamp=False))
        return {"tactile": np.stack(tac), "proprio": np.stack(pro),
                "actions": np.stack(act)}


def build_pairs(episodes, horizons):
    """Windowed pairs for every episode, tagged with the episode index."""
    all_pairs = []
    for idx, ep in enumerate(episodes):
        pairs = ds.sample_pairs(ep, horizons.t_a, horizons.t_o, horizons.t_tau)
        for p in pairs:
            p.episode_index = idx
        all_pairs.append(pairs)
    return all_pairs


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-5
    steps: int = 128
    val_fraction: float = 0.2
    split_seed: int = 0
    unet_widths: tuple = (64, 128, 256)
    horizons: Horizons = field(default_factory=Horizons)
    max_steps: int | None = None    # optional cap for smoke runs


def train_policy(episodes, modality, cfg, seed, log=None):
    """Train one diffusion policy; returns (net, history-of-records)."""
    usable = [ep for ep in episodes if not ep.slipped]
    if modality == "raw" and any(ep.raw is None for ep in usable):
        raise ValueError("raw modality requires stored raw tactile frames")
    demo_kind = usable[0].demo_kind
    h = cfg.horizons
    pairs_by_ep = build_pairs(usable, h)
    train_eps, val_eps = ds.split_episodes(len(usable), cfg.val_fraction, cfg.split_seed)
    norm = ds.compute_norm_stats([usable[i] for i in train_eps],
                                 [pairs_by_ep[i] for i in train_eps])
    if demo_kind.startswith("B"):
        norm.action_min = list(norm.pose_min)
        norm.action_max = list(norm.pose_max)

    obs_hw = None
    if modality == "shear":
        obs_hw = usable[0].shear.shape[1:3]
    elif modality == "raw":
        obs_hw = usable[0].raw.shape[2:4]
    net = PolicyNet(modality, obs_hw, h, seed, steps=cfg.steps,
                    unet_widths=cfg.unet_widths, demo_kind=demo_kind)
    net.norm = norm

    train_pairs = [p for i in train_eps for p in pairs_by_ep[i]]
    val_pairs = [p for i in val_eps for p in pairs_by_ep[i]]
    sampler = PairSampler(usable, train_pairs, modality, norm,
                          augment=(modality == "raw"),
                          augment_seed=derive_rng(seed, "aug").integers(2**31))
    val_sampler = PairSampler(usable, val_pairs, modality, norm, augment=False)

    rng = derive_rng(seed, "train", modality)
    history = []
    total_steps = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_pairs))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            if len(idx) < 2:
                continue
            batch = sampler.batch(idx)
            try:
                losses.append(net.train_step(batch, rng, cfg.lr))
            except FloatingPointError as exc:
                raise TrainingDivergedError(
                    f"{modality} policy diverged at epoch {epoch}: {exc}") from exc
            total_steps += 1
            if cfg.max_steps and total_steps >= cfg.max_steps:
                break
        val_losses = []
        vrng = derive_rng(seed, "val", epoch)
        for lo in range(0, len(val_pairs), cfg.batch_size):
            vb = val_sampler.batch(np.arange(lo, min(lo + cfg.batch_size, len(val_pairs))))
            if vb["actions"].shape[0] >= 1:
                val_losses.append(net.eval_loss(vb, vrng))
        rec = {"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else None,
               "val_loss": float(np.mean(val_losses)) if val_losses else None,
               "steps": total_steps}
        history.append(rec)
        if log:
            val_s = "-" if rec["val_loss"] is None else f"{rec['val_loss']:.4f}"
            log(f"[{modality}] epoch {epoch + 1}/{cfg.epochs} "
                f"train {rec['train_loss']:.4f} val {val_s}")
        if cfg.max_steps and total_steps >= cfg.max_steps:
            break
    return net, history


# ---------------------------------------------------------------------------
# rollout controller

class DiffusionController:
    """Closed-loop executor: keeps the observation history, re-infers an
    action chunk every t_e control ticks and emits commanded poses."""

    def __init__(self, net, embodiment, seed=0, k_inf=16, eta=0.5):
        if net.norm is None:
            raise ValueError("policy has no normalization stats (untrained?)")
        self.net = net
        self.embodiment = embodiment
        self.k_inf = k_inf
        self.eta = eta
        self.rng = derive_rng(seed, "rollout", net.modality)
        self._tac_hist = []
        self._pro_hist = []
        self._queue = []
        self._cmd = None
        self.warmup_flagged = False

    def reset(self):
        self._tac_hist.clear()
        self._pro_hist.clear()
        self._queue.clear()
        self._cmd = None

    def _normalized_obs(self, obs):
        from .flow import normalize_shear

        n = self.net.norm
        if self.net.modality == "shear":
            frame = normalize_shear(obs.shear, n.tactile_m, n.tactile_d) \
                .transpose(2, 0, 1).astype(np.float32)
        elif self.net.modality == "raw":
            frame = (obs.raw * 2.0 - 1.0).astype(np.float32)
        else:
            frame = ds.normalize_component(obs.f_meas, n.force_min, n.force_max)
        if self.embodiment.proprioception:
            prop = ds.normalize_component(obs.pose, n.pose_min, n.pose_max)
        else:
            prop = np.zeros(2, dtype=np.float32)
        return frame, prop

    def tick(self, obs):
        h = self.net.horizons
        if self._cmd is None:
            self._cmd = np.asarray(obs.cmd, dtype=np.float64).copy()
        frame, prop = self._normalized_obs(obs)
        self._tac_hist.append(frame)
        self._pro_hist.append(prop)
        del self._tac_hist[: -h.t_tau], self._pro_hist[: -h.t_o]

        if len(self._tac_hist) < h.t_tau:
            self.warmup_flagged = True
            return None
        if not self._queue:
            chunk = self.net.sample_chunk(
                np.stack(self._tac_hist), np.stack(self._pro_hist),
                self.rng, k_inf=self.k_inf, eta=self.eta)
            actions = ds.denormalize_component(chunk, self.net.norm.action_min,
                                               self.net.norm.action_max)
            self._queue = [actions[i] for i in range(h.t_e)]
        act = self._queue.pop(0)
        if self.net.demo_kind.startswith("B"):
            self._cmd = np.asarray(act, dtype=np.float64)
        else:
            self._cmd = self._cmd + np.asarray(act, dtype=np.float64)
        return self._cmd.copy()
