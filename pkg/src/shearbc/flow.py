"""Dense optical flow on a fixed grid and the shear-field representation.

Coarse-to-fine block matching with parabolic sub-pixel refinement; the
rendered marker imagery is high-texture, so SSD matching on luminance is
sufficient and keeps the pipeline dependency-free.
"""

import numpy as np

from . import kernels

HALF_BLOCK = 4
FINE_RADIUS = 2
SEED_RADIUS = 6
DEGENERATE_VAR = 1e-8


def _n_levels(res):
    """Pyramid depth: coarsest level must stay >= ~64 px so the marker
    dots survive downsampling; desk-scale frames run single-level."""
    side = min(res)
    levels = 1
    while levels < 3 and side // (2**levels) >= 64:
        levels += 1
    return levels


def luminance(img):
    """(H, W, 3) -> (H, W) float32 luminance."""
    if img.ndim == 2:
        return img.astype(np.float32)
    return (img @ np.array([0.299, 0.587, 0.114], dtype=img.dtype)).astype(np.float32)


def _downsample(img):
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    return img[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _grid_centers(res, grid_hw):
    h, w = res
    gh, gw = grid_hw
    cy = ((np.arange(gh) + 0.5) * (h / gh)).astype(np.int64)
    cx = ((np.arange(gw) + 0.5) * (w / gw)).astype(np.int64)
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    return yy.reshape(-1), xx.reshape(-1)


def _median3(field):
    """3x3 median with edge replication, for displacement-field smoothing."""
    gh, gw = field.shape
    padded = np.pad(field, 1, mode="edge")
    stack = [padded[dy : dy + gh, dx : dx + gw] for dy in range(3) for dx in range(3)]
    return np.median(np.stack(stack), axis=0)


def _subpixel(neigh):
    """Parabolic 1-D fits along each axis of the (G,3,3) cost neighborhood."""
    c = neigh[:, 1, 1]
    offs = np.zeros((neigh.shape[0], 2))
    for axis, (lo, hi) in enumerate((
        (neigh[:, 0, 1], neigh[:, 2, 1]),
        (neigh[:, 1, 0], neigh[:, 1, 2]),
    )):
        ok = np.isfinite(lo) & np.isfinite(hi) & np.isfinite(c)
        denom = lo - 2 * c + hi
        ok &= np.abs(denom) > 1e-12
        off = np.where(ok, 0.5 * (lo - hi) / np.where(ok, denom, 1.0), 0.0)
        offs[:, axis] = np.clip(off, -0.5, 0.5)
    return offs


def optical_flow(img_ref, img_cur, grid_hw=(13, 18), max_disp=10, seed=None):
    """Dense flow from the undeformed frame to the current frame.

    Returns (v_x, v_y, low_confidence): v_x is the horizontal (column)
    component and v_y the vertical (row) component on the grid_hw grid,
    in pixels at full resolution. seed, when given, is an integer (dy, dx)
    pair of arrays from the previous frame; the search then only covers
    SEED_RADIUS around it (the optimum is unchanged for bounded slew).
    """
    if img_ref.shape != img_cur.shape:
        raise ValueError(f"frame shapes differ: {img_ref.shape} vs {img_cur.shape}")
    ref = luminance(img_ref)
    cur = luminance(img_cur)

    low_confidence = float(ref.var()) < DEGENERATE_VAR or float(cur.var()) < DEGENERATE_VAR
    gh, gw = grid_hw
    g = gh * gw
    if low_confidence:
        z = np.zeros((gh, gw), dtype=np.float32)
        return z, z.copy(), True

    # Edge-replicate padding lets search targets near a border stay
    # comparable at full range; reference blocks are clamped inside the
    # true image so replication streaks never enter the template.
    pad = int(max_disp) + SEED_RADIUS
    res = ref.shape
    ref = np.pad(ref, pad, mode="edge")
    cur = np.pad(cur, pad, mode="edge")
    cy0, cx0 = _grid_centers(res, grid_hw)
    cy0 = np.clip(cy0 + pad, pad + HALF_BLOCK, pad + res[0] - HALF_BLOCK)
    cx0 = np.clip(cx0 + pad, pad + HALF_BLOCK, pad + res[1] - HALF_BLOCK)
    if seed is not None:
        dy = np.asarray(seed[0], dtype=np.int64).reshape(-1)
        dx = np.asarray(seed[1], dtype=np.int64).reshape(-1)
        dy, dx, neigh = kernels.block_match(ref, cur, cy0, cx0, HALF_BLOCK,
                                            SEED_RADIUS, dy, dx)
    else:
        levels = _n_levels(ref.shape)
        pyr_ref, pyr_cur = [ref], [cur]
        for _ in range(levels - 1):
            pyr_ref.append(_downsample(pyr_ref[-1]))
            pyr_cur.append(_downsample(pyr_cur[-1]))
        dy = np.zeros(g, dtype=np.int64)
        dx = np.zeros(g, dtype=np.int64)
        neigh = None
        for lvl in range(levels - 1, -1, -1):
            scale = 2**lvl
            radius = int(np.ceil(max_disp / scale)) + 1 if lvl == levels - 1 else FINE_RADIUS
            cyl = np.clip(cy0 // scale, pad // scale + HALF_BLOCK,
                          (pad + res[0]) // scale - HALF_BLOCK)
            cxl = np.clip(cx0 // scale, pad // scale + HALF_BLOCK,
                          (pad + res[1]) // scale - HALF_BLOCK)
            dy, dx, neigh = kernels.block_match(
                pyr_ref[lvl], pyr_cur[lvl], cyl, cxl, HALF_BLOCK, radius, dy, dx)
            if lvl > 0:
                dy = dy * 2
                dx = dx * 2

    # vector-median consistency pass: ambiguous cells (mostly at borders)
    # snap to their neighborhood and get re-refined around the median
    med_y = np.rint(_median3(dy.reshape(gh, gw).astype(np.float64))).astype(np.int64)
    med_x = np.rint(_median3(dx.reshape(gh, gw).astype(np.float64))).astype(np.int64)
    dy, dx, neigh = kernels.block_match(ref, cur, cy0, cx0, HALF_BLOCK, FINE_RADIUS,
                                        med_y.reshape(-1), med_x.reshape(-1))

    offs = _subpixel(neigh)
    v_y = (dy + offs[:, 0]).reshape(gh, gw).astype(np.float32)
    v_x = (dx + offs[:, 1]).reshape(gh, gw).astype(np.float32)
    return v_x, v_y, False


def divergence(v_x, v_y):
    """Discrete divergence, central differences inside, one-sided at the
    borders, unit grid spacing. x is the column axis, y the row axis."""
    if v_x.shape != v_y.shape:
        raise ValueError(f"field shapes differ: {v_x.shape} vs {v_y.shape}")
    dvx = np.empty_like(v_x)
    dvx[:, 1:-1] = 0.5 * (v_x[:, 2:] - v_x[:, :-2])
    dvx[:, 0] = v_x[:, 1] - v_x[:, 0]
    dvx[:, -1] = v_x[:, -1] - v_x[:, -2]
    dvy = np.empty_like(v_y)
    dvy[1:-1, :] = 0.5 * (v_y[2:, :] - v_y[:-2, :])
    dvy[0, :] = v_y[1, :] - v_y[0, :]
    dvy[-1, :] = v_y[-1, :] - v_y[-2, :]
    return dvx + dvy


def shear_field(left, right):
    """Stack per-pad (v_x, v_y, div) triples into the (H, W, 6) field.

    Channel order is left v_x, v_y, div then right v_x, v_y, div.
    """
    if left is None or right is None:
        raise ValueError("both pads are required to assemble a shear field")
    lx, ly, ld = left
    rx, ry, rd = right
    if not (lx.shape == ly.shape == ld.shape == rx.shape == ry.shape == rd.shape):
        raise ValueError("pad field shapes disagree")
    return np.stack([lx, ly, ld, rx, ry, rd], axis=-1).astype(np.float32)


def normalize_shear(batch, v_max, d_max, clamp=True):
    """Map v channels (-M,M)->(-1,1) and div channels (-D,D)->(-1,1)."""
    out = np.asarray(batch, dtype=np.float32).copy()
    v_idx = [0, 1, 3, 4]
    d_idx = [2, 5]
    out[..., v_idx] /= v_max
    out[..., d_idx] /= d_max
    if clamp:
        np.clip(out, -1.0, 1.0, out=out)
    return out


def shear_norm_stats(batch):
    """Training-set maxima (M over flow components, D over divergence)."""
    arr = np.asarray(batch)
    v_max = float(np.abs(arr[..., [0, 1, 3, 4]]).max())
    d_max = float(np.abs(arr[..., [2, 5]]).max())
    if v_max == 0.0 or d_max == 0.0:
        raise ValueError("degenerate dataset: zero flow or divergence range")
    return v_max, d_max
