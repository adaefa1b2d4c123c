"""Measurement suite: effort protocols, placement trials, latent-shift
analysis and the force-estimation study, with text/JSON reporting."""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dataset as ds
from . import flow as flowmod
from . import sim, tactile
from .nn import Linear, ParamStore
from .policy import DiffusionController, TactileCNN, PROPRIO_FEATURE
from .seeding import derive_rng
from .tsne import tsne_embed

# Hardware measurements reported for the same protocols (labelled
# "hardware (paper)" in reports; the simulator asserts orderings only).
HARDWARE_EFFORT_MANEUVER = {
    "demo": {"mean": 4.9, "sd": 1.6},
    "ji-medium": {"force": 5.2, "shear": 5.7, "raw": 8.3},
    "ji-stiff": {"force": 6.9, "shear": 7.2, "raw": 9.4},
    "jp": {"force": 11.2, "shear": 12.1, "raw": 19.3},
}
HARDWARE_EFFORT_PLACEMENT = {
    "A": {"ji-medium": {"force": 5.5, "shear": 5.8},
          "ji-stiff": {"force": 5.9, "shear": 6.3},
          "jp": {"force": 9.3, "shear": 8.8}},
    "B": {"ji-medium": {"force": 3.9, "shear": 3.7},
          "ji-stiff": {"force": 3.8, "shear": 5.2},
          "jp": {"force": 7.2, "shear": 5.1}},
}
HARDWARE_FORCE_EST = {
    "encoder": {"raw": [(-1.7, 4.16), (0.34, 2.52), (-3.33, 1.6)],
                "shear": [(-0.93, 4.32), (-0.43, 3.3), (-0.51, 1.94)]},
    "ae": {"raw": [(2.54, 3.28), (0.65, 2.62), (-2.99, 1.69)],
           "shear": [(-0.52, 4.59), (-0.69, 3.1), (-0.07, 1.71)]},
    "vae": {"raw": [(-0.57, 4.02), (0.61, 2.67), (-2.72, 1.69)],
            "shear": [(-1.3, 4.79), (0.01, 2.96), (-0.64, 1.72)]},
}


def effort_metric(f):
    """Euclidean norm of the planar interaction wrench."""
    f = np.asarray(f, dtype=np.float64)
    return float(math.hypot(f[0], f[1]))


@dataclass
class EffortReport:
    embodiment: str
    modality: str
    efforts: list = field(default_factory=list)     # per-tick values, all trials
    trial_means: list = field(default_factory=list)
    failures: list = field(default_factory=list)    # per-trial status
    baseline_mean: float | None = None

    @property
    def mean(self):
        return float(np.mean(self.efforts)) if self.efforts else float("nan")

    @property
    def sd(self):
        return float(np.std(self.efforts)) if self.efforts else float("nan")

    @property
    def pct_increase(self):
        if not self.efforts or not self.baseline_mean:
            return None
        return 100.0 * (self.mean - self.baseline_mean) / self.baseline_mean

    def to_json(self):
        return {"embodiment": self.embodiment, "modality": self.modality,
                "mean": self.mean, "sd": self.sd, "n_ticks": len(self.efforts),
                "trial_means": self.trial_means, "failures": self.failures,
                "baseline_mean": self.baseline_mean, "pct_increase": self.pct_increase}


def demo_effort_baseline(episodes):
    """Effort distribution seen during the recorded demonstrations."""
    vals = np.concatenate([np.linalg.norm(ep.f_human, axis=1) for ep in episodes])
    return float(vals.mean()), float(vals.std())


def _make_world(embodiment_kind, human, seed, nuisance, world_cfg=None,
                controller=None, scenario="maneuver", record_raw=False,
                sensor_cfg=None):
    left, right = tactile.default_pair(sensor_cfg)
    bridge = tactile.TactileBridge(left, right, nuisance,
                                   noise_seed=derive_rng(seed, "noise").integers(2**31))
    emb = sim.make_embodiment(embodiment_kind)
    cfg = world_cfg or sim.WorldConfig()
    return sim.World(emb, human, bridge, config=cfg, seed=seed,
                     controller=controller, scenario=scenario, record_raw=record_raw)


def run_maneuverability(net, embodiment_kind, seed, trials=3, duration=25.0,
                        nuisance_ranges=None, shifted_nuisance=True,
                        world_cfg=None, collect_latents=False, hand_speed=0.12,
                        record_raw=False):
    """Scripted random maneuvering with the policy in the loop.

    Returns (EffortReport, latents or None). Trials share seeds across
    modalities/embodiments so comparisons see identical human intent.
    """
    modality = net.modality if net is not None else "open-loop"
    report = EffortReport(embodiment=embodiment_kind, modality=modality)
    latents = []
    for trial in range(trials):
        trial_seed = derive_rng(seed, "maneuver-trial", trial).integers(2**31)
        nu = tactile.sample_nuisance(derive_rng(trial_seed, "nuisance"),
                                     ranges=nuisance_ranges, shifted=shifted_nuisance)
        human = sim.HumanAgent("maneuver", seed=trial_seed, duration=duration,
                               speed=hand_speed)
        controller = None
        if net is not None:
            controller = DiffusionController(net, sim.make_embodiment(embodiment_kind),
                                             seed=trial_seed)
        world = _make_world(embodiment_kind, human, trial_seed, nu,
                            world_cfg=world_cfg, controller=controller,
                            record_raw=record_raw or collect_latents)
        ticks = world.run(duration)
        efforts = [effort_metric(t.f_human) for t in ticks]
        report.efforts.extend(efforts)
        report.trial_means.append(float(np.mean(efforts)))
        report.failures.append(world.status)
        if collect_latents and net is not None:
            frames = _normalized_frames(net, ticks)
            if frames is not None and len(frames):
                latents.append(net.tactile_latent(frames))
    return report, (np.concatenate(latents) if latents else None)


def _normalized_frames(net, ticks):
    n = net.norm
    if net.modality == "shear":
        return np.stack([
            flowmod.normalize_shear(t.shear, n.tactile_m, n.tactile_d).transpose(2, 0, 1)
            for t in ticks]).astype(np.float32)
    if net.modality == "raw":
        return np.stack([t.raw * 2.0 - 1.0 for t in ticks]).astype(np.float32)
    return np.stack([
        ds.normalize_component(t.f_meas, n.force_min, n.force_max) for t in ticks])


@dataclass
class PlacementResult:
    success: bool
    status: str
    effort: EffortReport
    completion_t: float | None


def run_box_placement(net, embodiment_kind, seed, nuisance_ranges=None,
                      shifted_nuisance=True, world_cfg=None, timeout=60.0,
                      hand_speed=0.035):
    """One collaborative placement trial; success requires the box at rest
    within tolerance of the target with the grasp intact."""
    cfg = world_cfg or sim.WorldConfig(start=(-0.15, 0.1))
    nu = tactile.sample_nuisance(derive_rng(seed, "nuisance"),
                                 ranges=nuisance_ranges, shifted=shifted_nuisance)
    human = sim.HumanAgent("place", seed=seed, start=cfg.start, target=cfg.target,
                           speed=hand_speed)
    controller = None
    if net is not None:
        controller = DiffusionController(net, sim.make_embodiment(embodiment_kind),
                                         seed=seed)
    world = _make_world(embodiment_kind, human, seed, nu, world_cfg=cfg,
                        controller=controller, scenario="place")
    ticks = world.run(timeout)
    efforts = [effort_metric(t.f_human) for t in ticks]
    report = EffortReport(embodiment=embodiment_kind,
                          modality=net.modality if net else "open-loop",
                          efforts=efforts, trial_means=[float(np.mean(efforts))],
                          failures=[world.status])
    return PlacementResult(success=(world.status == "success"), status=world.status,
                           effort=report, completion_t=world.completion_t)


# ---------------------------------------------------------------------------
# latent distribution shift

@dataclass
class ShiftReport:
    modality: str
    knn_accuracy: float
    hull_containment: float
    embedding: np.ndarray | None = None
    labels: np.ndarray | None = None

    def to_json(self):
        return {"modality": self.modality, "knn_accuracy": self.knn_accuracy,
                "hull_containment": self.hull_containment}


def knn_two_sample_accuracy(a, b, k=5):
    """Leave-one-out k-NN accuracy separating balanced samples a vs b in
    their native feature space; ~0.5 means indistinguishable."""
    x = np.vstack([a, b]).astype(np.float64)
    labels = np.concatenate([np.zeros(len(a)), np.ones(len(b))])
    s = (x * x).sum(axis=1)
    d2 = s[:, None] + s[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1)[:, :k]
    votes = labels[nn].mean(axis=1)
    pred = (votes > 0.5).astype(float)
    # exact ties resolve to the nearest neighbour's label
    ties = votes == 0.5
    pred[ties] = labels[nn[ties, 0]]
    return float((pred == labels).mean())


def hull_containment_2d(demo_xy, roll_xy):
    """Fraction of rollout points inside the demo convex hull (2-D)."""
    from scipy.spatial import Delaunay

    if len(demo_xy) < 3:
        return 0.0
    tri = Delaunay(demo_xy)
    return float((tri.find_simplex(roll_xy) >= 0).mean())


def latent_shift_score(demo_latents, rollout_latents, modality, seed=0, k=5,
                       max_points=200, perplexity=30.0, iterations=1000,
                       with_embedding=True):
    """Two-sample analysis: k-NN accuracy in latent space plus a 2-D
    embedding with convex-hull containment for the figure analog."""
    n = min(len(demo_latents), len(rollout_latents), max_points)
    if n < 50:
        raise ValueError(f"need at least 50 points per side, got {n}")
    rng = derive_rng(seed, "shift", modality)
    di = rng.choice(len(demo_latents), size=n, replace=False)
    ri = rng.choice(len(rollout_latents), size=n, replace=False)
    demo = np.asarray(demo_latents)[di]
    roll = np.asarray(rollout_latents)[ri]
    acc = knn_two_sample_accuracy(demo, roll, k=k)
    emb = labels = None
    containment = float("nan")
    if with_embedding:
        emb = tsne_embed(np.vstack([demo, roll]), perplexity=perplexity,
                         iterations=iterations, seed=int(rng.integers(2**31)))
        labels = np.concatenate([np.zeros(n), np.ones(n)])
        containment = hull_containment_2d(emb[:n], emb[n:])
    return ShiftReport(modality=modality, knn_accuracy=acc,
                       hull_containment=containment, embedding=emb, labels=labels)


# ---------------------------------------------------------------------------
# force estimation study

@dataclass
class ForceEstCell:
    architecture: str
    representation: str
    error_mean: list      # signed, per axis (x, y, z)
    error_sd: list
    mae: list
    converged: bool = True

    def to_json(self):
        return dict(architecture=self.architecture, representation=self.representation,
                    error_mean=self.error_mean, error_sd=self.error_sd,
                    mae=self.mae, converged=self.converged)


class _ForceRegressor:
    """Encoder / autoencoder / variational-autoencoder force heads that
    share the tactile conv trunk."""

    LATENT = 32

    def __init__(self, arch, rep, in_shape, seed):
        self.arch = arch
        self.rep = rep
        self.store = ParamStore()
        rng = derive_rng(seed, "force-est", arch, rep)
        c, h, w = in_shape
        self.in_shape = in_shape
        self.cnn = TactileCNN(self.store, "enc", (h, w), rng, channels=c)
        feat = 128
        if arch == "vae":
            self.mu = Linear(self.store, "mu", feat, self.LATENT, rng, final=True)
            self.logvar = Linear(self.store, "logvar", feat, self.LATENT, rng, final=True)
            zdim = self.LATENT
        else:
            zdim = feat
        self.reg = Linear(self.store, "reg", zdim, 3, rng, final=True)
        self.recon_shape = None
        if arch in ("ae", "vae"):
            rh, rw = (h, w) if h * w <= 512 else (h // 2, w // 2)
            self.recon_shape = (c, rh, rw)
            self.dec = Linear(self.store, "dec", zdim,
                              c * rh * rw, rng, final=True)

    def _recon_target(self, x):
        c, rh, rw = self.recon_shape
        if (rh, rw) == self.in_shape[1:]:
            return x.reshape(x.shape[0], -1)
        n = x.shape[0]
        pooled = x[:, :, : rh * 2, : rw * 2].reshape(n, c, rh, 2, rw, 2).mean(axis=(3, 5))
        return pooled.reshape(n, -1)

    def loss(self, x, target_f, rng):
        feat = self.cnn(ad.Tensor(x))
        kl = None
        if self.arch == "vae":
            mu = self.mu(feat)
            logvar = self.logvar(feat)
            epsn = rng.standard_normal(mu.data.shape).astype(np.float32)
            std = ad.exp(ad.scale(logvar, 0.5))
            z = ad.add(mu, ad.mul(std, ad.Tensor(epsn)))
            kl = ad.scale(ad.mean_all(ad.sub(ad.add(ad.square(mu), ad.exp(logvar)),
                                             ad.add_const(logvar, 1.0))), 0.5)
        else:
            z = feat
        pred = self.reg(z)
        loss = ad.mse(pred, target_f)
        if self.recon_shape is not None:
            rec = self.dec(z)
            loss = ad.add(loss, ad.mse(rec, self._recon_target(x)))
        if kl is not None:
            loss = ad.add(loss, ad.scale(kl, 1e-3))
        return loss

    def predict(self, x):
        with ad.no_grad():
            feat = self.cnn(ad.Tensor(x))
            z = self.mu(feat) if self.arch == "vae" else feat
            return self.reg(z).data.copy()


def synth_force_dataset(n, seed, shifted=False, sensor_cfg=None, grid_hw=(13, 18),
                        force_range=8.0, n_sessions=8, nuisance_ranges=None):
    """Labelled (shear, raw, force) triples from the sensor model.

    The pad-normal axis label is f_x; nuisance sessions rotate round-robin
    and the shifted flag moves every session into the shifted regime.
    """
    left, right = tactile.default_pair(sensor_cfg)
    rng = derive_rng(seed, "force-data", shifted)
    sessions = [tactile.sample_nuisance(rng, ranges=nuisance_ranges, shifted=shifted)
                for _ in range(n_sessions)]
    shear_list, raw_list, forces = [], [], []
    for i in range(n):
        nu = sessions[i % n_sessions]
        f = rng.uniform(-force_range, force_range, size=3)
        fields, planes = [], []
        for pad in (left, right):
            ref_img, _ = tactile.sensor_response(pad, (0.0, 0.0), 0.0, nu, rng=rng)
            img, _ = tactile.sensor_response(pad, (f[1], f[2]), f[0], nu, rng=rng)
            vx, vy, _ = flowmod.optical_flow(ref_img, img, grid_hw=grid_hw)
            fields.append((vx, vy, flowmod.divergence(vx, vy)))
            planes.append(np.moveaxis(img, 2, 0))
        shear_list.append(flowmod.shear_field(fields[0], fields[1]))
        raw_list.append(np.concatenate(planes, axis=0).astype(np.float32))
        forces.append(f)
    return (np.stack(shear_list), np.stack(raw_list),
            np.asarray(forces, dtype=np.float32))


def force_estimation_study(seed=0, n_train=320, n_val=80, n_test=200,
                           epochs=120, batch_size=32, lr=1e-3, sensor_cfg=None,
                           nuisance_ranges=None, log=None):
    """Train {encoder, ae, vae} x {shear, raw} force heads and evaluate
    signed per-axis error on a separately collected (shifted) test set."""
    tr_shear, tr_raw, tr_f = synth_force_dataset(n_train + n_val, seed, shifted=False,
                                                 sensor_cfg=sensor_cfg,
                                                 nuisance_ranges=nuisance_ranges)
    te_shear, te_raw, te_f = synth_force_dataset(n_test, seed + 1, shifted=True,
                                                 sensor_cfg=sensor_cfg,
                                                 nuisance_ranges=nuisance_ranges)
    m, d = flowmod.shear_norm_stats(tr_shear[:n_train])
    fscale = 8.0

    def prep(shear, raw):
        sh = flowmod.normalize_shear(shear, m, d).transpose(0, 3, 1, 2).copy()
        rw = (raw * 2.0 - 1.0).astype(np.float32)
        return {"shear": sh, "raw": rw}

    tr_x = prep(tr_shear, tr_raw)
    te_x = prep(te_shear, te_raw)
    cells = []
    for arch in ("encoder", "ae", "vae"):
        for rep in ("raw", "shear"):
            rng = derive_rng(seed, "force-train", arch, rep)
            model = _ForceRegressor(arch, rep, tr_x[rep].shape[1:], seed)
            xs, ys = tr_x[rep][:n_train], tr_f[:n_train] / fscale
            converged = True
            try:
                for ep in range(epochs):
                    order = rng.permutation(n_train)
                    for lo in range(0, n_train, batch_size):
                        idx = order[lo : lo + batch_size]
                        loss = model.loss(xs[idx], ys[idx], rng)
                        model.store.zero_grad()
                        ad.backward(loss)
                        model.store.adam_step(lr)
                    if log and (ep + 1) % 40 == 0:
                        log(f"[force-est {arch}/{rep}] epoch {ep + 1}/{epochs} "
                            f"loss {float(loss.data):.4f}")
            except FloatingPointError:
                converged = False
            pred = np.vstack([model.predict(te_x[rep][i : i + 64])
                              for i in range(0, n_test, 64)]) * fscale
            err = pred - te_f
            cells.append(ForceEstCell(
                architecture=arch, representation=rep,
                error_mean=[float(v) for v in err.mean(axis=0)],
                error_sd=[float(v) for v in err.std(axis=0)],
                mae=[float(v) for v in np.abs(err).mean(axis=0)],
                converged=converged))
    return cells


# ---------------------------------------------------------------------------
# report rendering

def format_effort_table(reports, baseline):
    """Text table shaped like the maneuverability effort results."""
    lines = ["Effort, maneuverability protocol (N)",
             f"{'cell':<22}{'sim (this run)':<22}hardware (paper)"]
    bm, bs = baseline
    ref = HARDWARE_EFFORT_MANEUVER
    lines.append(f"{'demo D_mal':<22}{bm:.2f} +/- {bs:.2f}{'':<8}"
                 f"{ref['demo']['mean']} +/- {ref['demo']['sd']}")
    for r in reports:
        hw = ref.get(r.embodiment, {}).get(r.modality, "-")
        pct = f" (+{r.pct_increase:.0f}%)" if r.pct_increase is not None else ""
        lines.append(f"{r.embodiment + '/' + r.modality:<22}"
                     f"{r.mean:.2f} +/- {r.sd:.2f}{pct:<10}{hw}")
    return "\n".join(lines)


def format_force_table(cells):
    lines = ["Force estimation, signed error mean +/- SD (N)",
             f"{'cell':<18}{'f_x':<18}{'f_y':<18}{'f_z':<18}reference f_z (paper)"]
    for c in cells:
        hw = HARDWARE_FORCE_EST[c.architecture][c.representation][2]
        cols = "".join(f"{m:+.2f} +/- {s:.2f}   "
                       for m, s in zip(c.error_mean, c.error_sd))
        lines.append(f"{c.architecture + '/' + c.representation:<18}{cols}"
                     f"{hw[0]:+.2f} +/- {hw[1]:.2f}")
    return "\n".join(lines)


def save_report(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
