"""Exact O(n^2) t-SNE with perplexity calibration by bisection.

Small-scale embedding for latent-shift figures; capped at 2000 points.
"""

import warnings

import numpy as np

MAX_POINTS = 2000


def _pairwise_sq_dists(x):
    s = (x * x).sum(axis=1)
    d2 = s[:, None] + s[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _calibrate_affinities(d2, perplexity, tol=1e-5, max_iter=64):
    """Per-point precision (beta) bisection to hit log(perplexity) entropy."""
    n = d2.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        beta, lo, hi = 1.0, -np.inf, np.inf
        di = np.delete(d2[i], i)
        for _ in range(max_iter):
            w = np.exp(-di * beta)
            sw = w.sum()
            if sw <= 0:
                entropy = 0.0
                pi = np.zeros_like(w)
            else:
                pi = w / sw
                entropy = np.log(sw) + beta * (di * pi).sum()
            diff = entropy - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta / 2.0 if lo == -np.inf else 0.5 * (beta + lo)
        row = np.insert(pi, i, 0.0)
        p[i] = row
    return p


def tsne_embed(latents, perplexity=30.0, iterations=1000, seed=0,
               early_exaggeration=12.0, exaggeration_iters=250, learning_rate=200.0):
    """Embed latents (n, d) into 2-D. Deterministic for a fixed seed."""
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"latents must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n > MAX_POINTS:
        raise ValueError(f"exact t-SNE capped at {MAX_POINTS} points, got {n}")
    if n == 0:
        return np.zeros((0, 2))
    if n == 1:
        return np.zeros((1, 2))
    if perplexity >= n / 3:
        raise ValueError(f"perplexity {perplexity} too large for n={n} (need < n/3)")

    rng = np.random.Generator(np.random.PCG64(seed))
    d2 = _pairwise_sq_dists(x)
    off_diag = d2[~np.eye(n, dtype=bool)]
    if off_diag.max() < 1e-12:
        warnings.warn("identical input points; jittering before embedding")
        x = x + rng.normal(0.0, 1e-6, size=x.shape)
        d2 = _pairwise_sq_dists(x)

    p_cond = _calibrate_affinities(d2, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(iterations):
        exag = early_exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8

        ydiff2 = _pairwise_sq_dists(y)
        num = 1.0 / (1.0 + ydiff2)
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)

        pq = (exag * p - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)

        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
    return y
