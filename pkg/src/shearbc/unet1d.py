"""Conditional 1-D U-Net noise predictor for short action sequences.

Three resolution levels with FiLM conditioning on the fused observation
feature concatenated with a sinusoidal timestep embedding.
"""

import numpy as np

from . import autodiff as ad
from . import diffusion
from .nn import ChannelNorm1d, Conv1d, Linear


class _FilmBlock:
    """Conv -> channel norm -> FiLM(cond) -> ReLU."""

    def __init__(self, store, name, c_in, c_out, cond_dim, rng):
        self.conv = Conv1d(store, f"{name}.conv", c_in, c_out, 3, rng)
        self.norm = ChannelNorm1d(store, f"{name}.norm", c_out)
        self.film = Linear(store, f"{name}.film", cond_dim, 2 * c_out, rng, final=True)
        self.c_out = c_out

    def __call__(self, x, cond):
        h = self.norm(self.conv(x))
        gb = self.film(cond)
        gain = ad.slice_axis(gb, 1, 0, self.c_out)
        bias = ad.slice_axis(gb, 1, self.c_out, 2 * self.c_out)
        return ad.relu(ad.film1d(h, gain, bias))


class ConditionalUNet1d:
    """Noise predictor eps(A_k, cond, k) over (B, action_dim, horizon)."""

    def __init__(self, store, name, action_dim, horizon, cond_dim, rng,
                 widths=(64, 128, 256), k_embed_dim=64):
        if horizon % 4 != 0:
            raise ValueError(f"horizon must be divisible by 4, got {horizon}")
        self.horizon = horizon
        self.action_dim = action_dim
        self.k_embed_dim = k_embed_dim
        full_cond = cond_dim + k_embed_dim
        w1, w2, w3 = widths
        self.enc1 = _FilmBlock(store, f"{name}.enc1", action_dim, w1, full_cond, rng)
        self.enc2 = _FilmBlock(store, f"{name}.enc2", w1, w2, full_cond, rng)
        self.mid = _FilmBlock(store, f"{name}.mid", w2, w3, full_cond, rng)
        self.dec2 = _FilmBlock(store, f"{name}.dec2", w3 + w2, w2, full_cond, rng)
        self.dec1 = _FilmBlock(store, f"{name}.dec1", w2 + w1, w1, full_cond, rng)
        self.head = Conv1d(store, f"{name}.head", w1, action_dim, 3, rng, final=True)
        # zero-init head: the untrained net predicts zero noise
        self.head.w.data[:] = 0.0
        self.head.b.data[:] = 0.0

    def __call__(self, a_noisy, cond, k):
        """a_noisy: Tensor (B, action_dim, horizon); cond: Tensor (B, cond_dim);
        k: int array (B,). Returns predicted noise with a_noisy's shape."""
        kemb = diffusion.timestep_embedding(k, self.k_embed_dim)
        if kemb.shape[0] == 1 and a_noisy.data.shape[0] > 1:
            kemb = np.repeat(kemb, a_noisy.data.shape[0], axis=0)
        c = ad.concat([cond, ad.Tensor(kemb.astype(cond.dtype))], axis=1)
        h1 = self.enc1(a_noisy, c)
        h2 = self.enc2(ad.avgpool1d(h1), c)
        m = self.mid(ad.avgpool1d(h2), c)
        u2 = self.dec2(ad.concat([ad.upsample1d(m), h2], axis=1), c)
        u1 = self.dec1(ad.concat([ad.upsample1d(u2), h1], axis=1), c)
        return self.head(u1)
