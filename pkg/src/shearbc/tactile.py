"""Synthetic two-finger marker-pad tactile sensor.

Grasp forces displace a jittered marker grid; frames are rendered as dark
Gaussian dots over a low-contrast background texture, with per-session
imaging nuisances applied. Marker geometry responds only to forces, never
to nuisances.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .seeding import derive_rng


@dataclass
class SensorModel:
    """Marker pad geometry and force-to-displacement gains (pixels/N)."""

    rows: int = 13
    cols: int = 18
    res: tuple = (64, 84)           # (height, width) pixels
    shear_gain: float = 1.3         # tangential px/N
    normal_gain: float = 0.12       # radial px/N, well below shear_gain
    torque_gain: float = 0.0        # px/(N*m) tangential swirl
    noise_sigma: float = 0.25       # per-marker px noise
    marker_sigma: float = 1.4       # rendered dot radius, px
    marker_contrast: float = 0.65
    max_excursion: float = 14.0     # px clamp, pre-slip saturation
    mirror: float = 1.0             # +1 right pad, -1 left pad (horizontal flip)
    layout_seed: int = 11

    def __post_init__(self):
        if not self.normal_gain < 0.3 * self.shear_gain:
            raise ValueError("normal_gain must stay below 0.3 * shear_gain")
        if self.rows * self.cols < 1:
            raise ValueError("empty marker grid")

    def marker_positions(self):
        """(M, 2) array of (row, col) marker centers, jittered grid, px."""
        h, w = self.res
        sy, sx = h / self.rows, w / self.cols
        rng = derive_rng(self.layout_seed, "layout", self.mirror)
        ys = (np.arange(self.rows) + 0.5) * sy
        xs = (np.arange(self.cols) + 0.5) * sx
        grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        jitter = rng.uniform(-0.3, 0.3, size=grid.shape) * np.array([sy, sx])
        return grid + jitter

    def displacement(self, f_tangential, f_normal, torque=0.0, rng=None):
        """Per-marker (drow, dcol) displacement in pixels for a grasp load.

        f_tangential: (f_y, f_z) world-frame tangential grasp force.
        f_normal: load into the pad. Saturates at max_excursion.
        """
        pos = self.marker_positions()
        h, w = self.res
        center = np.array([h / 2.0, w / 2.0])
        rel = pos - center
        rnorm = np.linalg.norm(rel, axis=1, keepdims=True)
        radial = np.divide(rel, rnorm, out=np.zeros_like(rel), where=rnorm > 1e-9)
        fy, fz = float(f_tangential[0]), float(f_tangential[1])
        # world y -> image columns (mirrored per pad), world z up -> rows down
        u = np.zeros_like(pos)
        u[:, 1] += self.shear_gain * fy * self.mirror
        u[:, 0] += -self.shear_gain * fz
        u += self.normal_gain * float(f_normal) * radial
        if torque != 0.0:
            perp = np.stack([-rel[:, 1], rel[:, 0]], axis=1)
            u += self.torque_gain * float(torque) * perp
        if rng is not None and self.noise_sigma > 0:
            u = u + rng.normal(0.0, self.noise_sigma, size=u.shape)
        mag = np.linalg.norm(u, axis=1, keepdims=True)
        over = mag > self.max_excursion
        if over.any():
            u = np.where(over, u * (self.max_excursion / np.maximum(mag, 1e-9)), u)
        return u


@dataclass
class SessionNuisance:
    """Slowly varying imaging conditions; touches rendered pixels only."""

    illumination: float = 1.0
    tint: tuple = (1.0, 1.0, 1.0)
    contrast_scale: float = 1.0
    background_seed: int = 0

    def to_json(self):
        d = asdict(self)
        d["tint"] = list(self.tint)
        return d

    @staticmethod
    def from_json(d):
        return SessionNuisance(
            illumination=d["illumination"], tint=tuple(d["tint"]),
            contrast_scale=d["contrast_scale"], background_seed=d["background_seed"])


@dataclass
class NuisanceRanges:
    """Sampling windows for demo-time sessions and a deliberately shifted
    regime standing in for wear / exposure / lighting drift."""

    illumination: tuple = (0.9, 1.1)
    tint: tuple = (0.94, 1.06)
    contrast: tuple = (0.85, 1.0)
    shifted_illumination: tuple = (0.58, 0.72)
    shifted_tint: tuple = (0.68, 0.88)
    shifted_contrast: tuple = (0.5, 0.65)


def sample_nuisance(rng, ranges=None, shifted=False):
    ranges = ranges or NuisanceRanges()
    if shifted:
        lo_i, hi_i = ranges.shifted_illumination
        lo_t, hi_t = ranges.shifted_tint
        lo_c, hi_c = ranges.shifted_contrast
    else:
        lo_i, hi_i = ranges.illumination
        lo_t, hi_t = ranges.tint
        lo_c, hi_c = ranges.contrast
    return SessionNuisance(
        illumination=float(rng.uniform(lo_i, hi_i)),
        tint=tuple(float(v) for v in rng.uniform(lo_t, hi_t, size=3)),
        contrast_scale=float(rng.uniform(lo_c, hi_c)),
        background_seed=int(rng.integers(0, 2**31 - 1)),
    )


_BASE_COLOR = np.array([0.72, 0.80, 0.76])
_BG_AMPLITUDE = 0.045
_N_BG_WAVES = 24


def _background_field(res, seed, shift):
    """Band-limited random texture, evaluated with a rigid shift so the
    gel surface moves coherently with the mean tangential displacement."""
    h, w = res
    rng = derive_rng(seed, "bg")
    freqs = rng.uniform(0.05, 0.45, size=(_N_BG_WAVES, 2))
    phases = rng.uniform(0, 2 * np.pi, size=_N_BG_WAVES)
    amps = rng.uniform(0.3, 1.0, size=_N_BG_WAVES)
    yy = np.arange(h)[:, None] - shift[0]
    xx = np.arange(w)[None, :] - shift[1]
    out = np.zeros((h, w))
    for (fy, fx), ph, a in zip(freqs, phases, amps):
        out += a * np.sin(fy * yy + fx * xx + ph)
    out /= np.abs(out).max() + 1e-9
    return out


def render(model, displacements, nuisance):
    """Render one pad to an (H, W, 3) float image in [0, 1]."""
    h, w = model.res
    pos = model.marker_positions() + displacements
    mean_shift = displacements.mean(axis=0)
    lum = np.full((h, w), 1.0)
    lum += _BG_AMPLITUDE * _background_field(model.res, nuisance.background_seed, mean_shift)

    contrast = model.marker_contrast * nuisance.contrast_scale
    sig2 = 2.0 * model.marker_sigma**2
    rad = int(np.ceil(3 * model.marker_sigma))
    for my, mx in pos:
        y0, y1 = max(0, int(my) - rad), min(h, int(my) + rad + 1)
        x0, x1 = max(0, int(mx) - rad), min(w, int(mx) + rad + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy = np.arange(y0, y1)[:, None] - my
        xx = np.arange(x0, x1)[None, :] - mx
        lum[y0:y1, x0:x1] -= contrast * np.exp(-(yy**2 + xx**2) / sig2)

    img = lum[:, :, None] * _BASE_COLOR[None, None, :]
    img = img * nuisance.illumination * np.asarray(nuisance.tint)[None, None, :]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def sensor_response(model, f_tangential, f_normal, nuisance, torque=0.0, rng=None):
    """Map a grasp load to (rendered image, marker displacements)."""
    u = model.displacement(f_tangential, f_normal, torque=torque, rng=rng)
    return render(model, u, nuisance), u


def default_pair(config=None):
    """Left/right sensor models with mirrored horizontal response."""
    kw = dict(config or {})
    left = SensorModel(mirror=-1.0, layout_seed=11, **kw)
    right = SensorModel(mirror=+1.0, layout_seed=29, **kw)
    return left, right


class TactileBridge:
    """Two-pad sensing front end for the simulation.

    Holds the session nuisance and the per-episode reference frames; each
    measure() renders both pads, tracks flow from the reference (seeded by
    the previous displacement) and assembles the 6-channel shear field.
    """

    def __init__(self, left, right, nuisance, grid_hw=(13, 18), noise_seed=0):
        from . import flow as _flow

        self._flow = _flow
        self.pads = (left, right)
        self.nuisance = nuisance
        self.grid_hw = grid_hw
        self._noise_rng = derive_rng(noise_seed, "marker-noise")
        self._refs = [None, None]
        self._seeds = [None, None]

    def capture_reference(self, f_g, grip):
        """Reference frames at grasp onset; also resets flow seeding."""
        for i, pad in enumerate(self.pads):
            img, _ = sensor_response(pad, f_g, grip, self.nuisance, rng=self._noise_rng)
            self._refs[i] = img
            self._seeds[i] = None

    def measure(self, f_g, grip):
        """Render both pads under the current load; returns (shear, raw).

        shear: (H, W, 6) per the channel contract; raw: (6, Hi, Wi) planes
        ordered left RGB then right RGB.
        """
        from . import flow as _flow

        if self._refs[0] is None:
            raise RuntimeError("capture_reference must run before measure")
        max_disp = int(np.ceil(max(p.max_excursion for p in self.pads))) - 2
        fields = []
        planes = []
        for i, pad in enumerate(self.pads):
            img, _ = sensor_response(pad, f_g, grip, self.nuisance, rng=self._noise_rng)
            vx, vy, low_conf = _flow.optical_flow(
                self._refs[i], img, grid_hw=self.grid_hw, max_disp=max_disp,
                seed=self._seeds[i])
            if self._seeds[i] is not None and not low_conf:
                # boundary-saturated seeded search means the track was lost
                dy0, dx0 = self._seeds[i]
                cheb = np.maximum(np.abs(np.rint(vy) - dy0), np.abs(np.rint(vx) - dx0))
                if np.median(cheb) >= _flow.SEED_RADIUS - 1:
                    vx, vy, low_conf = _flow.optical_flow(
                        self._refs[i], img, grid_hw=self.grid_hw, max_disp=max_disp)
            # displacement physically saturates at the pad excursion limit;
            # clamping the seed keeps aliased tracks from walking past it
            self._seeds[i] = (
                np.clip(np.rint(vy), -max_disp, max_disp).astype(np.int64),
                np.clip(np.rint(vx), -max_disp, max_disp).astype(np.int64))
            div = _flow.divergence(vx, vy)
            fields.append((vx, vy, div))
            planes.append(np.moveaxis(img, 2, 0))
        shear = _flow.shear_field(fields[0], fields[1])
        raw = np.concatenate(planes, axis=0).astype(np.float32)
        return shear, raw
