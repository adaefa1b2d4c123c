"""Cosine noise schedule, forward noising and the DDIM reverse sampler.

The sampler is generic over a noise-prediction callable so it can be
exercised with closed-form oracles as well as trained networks.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class NoiseSchedule:
    """Cumulative signal fractions alpha_bar[k] for k = 0..K."""

    steps: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = self.alpha_bar
        if ab.shape != (self.steps + 1,):
            raise ValueError(f"alpha_bar must have K+1 entries, got {ab.shape}")
        if not (ab[0] > 0.999):
            raise ValueError(f"alpha_bar[0] must be ~1, got {ab[0]}")
        if not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")

    def to_json(self):
        return {"steps": self.steps, "kind": "cosine"}


def cosine_schedule(steps, s=0.008, max_beta=0.999):
    """Squared-cosine schedule; per-step betas clipped at max_beta so the
    terminal signal fraction stays strictly positive."""
    if steps < 2:
        raise ValueError(f"need at least 2 diffusion steps, got {steps}")
    k = np.arange(steps + 1, dtype=np.float64)
    f = np.cos(((k / steps) + s) / (1 + s) * np.pi / 2.0) ** 2
    raw = f / f[0]
    betas = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, max_beta)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(steps=steps, alpha_bar=alpha_bar)


def add_noise(schedule, x0, k, eps):
    """Forward noising x_k = sqrt(ab_k) x0 + sqrt(1 - ab_k) eps.

    k is an integer array broadcast over the leading axis of x0.
    """
    ab = schedule.alpha_bar[np.asarray(k)]
    shape = (-1,) + (1,) * (x0.ndim - 1)
    return (np.sqrt(ab).reshape(shape) * x0 + np.sqrt(1.0 - ab).reshape(shape) * eps).astype(x0.dtype)


def ddim_timesteps(steps, n_inference):
    """Uniformly strided reverse-process subsequence ending at 0, starting at K."""
    if steps % n_inference != 0:
        raise ValueError(f"inference steps {n_inference} must divide {steps}")
    c = steps // n_inference
    return np.arange(steps, 0, -c, dtype=np.int64)


def ddim_sample(predict_eps, shape, schedule, n_inference, eta, rng, x_init=None,
                clip_x0=1.0):
    """DDIM reverse process.

    predict_eps(x, k) -> predicted noise for integer timestep k.
    eta scales the stochastic term: 0 is deterministic, 1 matches the
    ancestral posterior variance. The intermediate clean-sample prediction
    is clipped to the normalized data range (clip_x0, None disables),
    without which the near-zero terminal signal fraction amplifies noise
    prediction error unboundedly. Returns the denoised sample.
    """
    ab = schedule.alpha_bar
    ts = ddim_timesteps(schedule.steps, n_inference)
    x = rng.standard_normal(shape).astype(np.float32) if x_init is None else x_init.astype(np.float32)
    for i, k in enumerate(ts):
        k_prev = ts[i + 1] if i + 1 < len(ts) else 0
        eps_hat = predict_eps(x, int(k))
        ab_k, ab_p = ab[k], ab[k_prev]
        x0_pred = (x - np.sqrt(1.0 - ab_k) * eps_hat) / np.sqrt(ab_k)
        if clip_x0 is not None:
            x0_pred = np.clip(x0_pred, -clip_x0, clip_x0)
            eps_hat = (x - np.sqrt(ab_k) * x0_pred) / np.sqrt(1.0 - ab_k) if ab_k < 1.0 else eps_hat
        var_ratio = (1.0 - ab_p) / (1.0 - ab_k) * (1.0 - ab_k / ab_p)
        sigma = eta * np.sqrt(max(var_ratio, 0.0))
        dir_coeff = np.sqrt(max(1.0 - ab_p - sigma**2, 0.0))
        x = np.sqrt(ab_p) * x0_pred + dir_coeff * eps_hat
        if sigma > 0:
            x = x + sigma * rng.standard_normal(shape)
        x = x.astype(np.float32)
    return x


def timestep_embedding(k, dim):
    """Sinusoidal embedding of integer diffusion timesteps, shape (len(k), dim)."""
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(np.float32)
