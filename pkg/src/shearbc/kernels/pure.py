"""Numpy implementations of the hot kernels.

Convolutions are im2col + BLAS matmul; pooling uses reshape tricks. These
are the reference semantics the compiled core must match (to float
round-off). Everything is dtype-generic over float32/float64.
"""

import numpy as np

# im2col chunking keeps peak memory bounded for large batches
_COL_CHUNK_BYTES = 64 << 20


def _im2col2d(x, kh, kw):
    """(N,C,H,W) -> (N, OH, OW, C*kh*kw) patch matrix, valid windows."""
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x, shape=(n, oh, ow, c, kh, kw), strides=(s0, s2, s3, s1, s2, s3)
    )
    return cols.reshape(n, oh, ow, c * kh * kw)


def conv2d_forward(x, w, b):
    """Valid cross-correlation, stride 1. x:(N,C,H,W) w:(O,C,kh,kw) b:(O,)."""
    n, c, h, wd = x.shape
    o, c2, kh, kw = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    wmat = w.reshape(o, c * kh * kw).T
    out = np.empty((n, o, oh, ow), dtype=x.dtype)
    rows_per_img = oh * ow * c * kh * kw * x.itemsize
    chunk = max(1, _COL_CHUNK_BYTES // max(rows_per_img, 1))
    for i in range(0, n, chunk):
        cols = np.ascontiguousarray(_im2col2d(x[i : i + chunk], kh, kw))
        y = cols @ wmat  # (nc, OH, OW, O)
        out[i : i + chunk] = np.moveaxis(y, 3, 1)
    out += b[None, :, None, None]
    return out


def conv2d_backward(x, w, grad):
    """Gradients of valid conv2d. grad:(N,O,OH,OW) -> (dx, dw, db)."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh, ow = grad.shape[2], grad.shape[3]
    db = grad.sum(axis=(0, 2, 3))

    dw = np.zeros((o, c * kh * kw), dtype=x.dtype)
    dx = np.zeros_like(x)
    wmat = w.reshape(o, c * kh * kw)
    rows_per_img = oh * ow * c * kh * kw * x.itemsize
    chunk = max(1, _COL_CHUNK_BYTES // max(rows_per_img, 1))
    for i in range(0, n, chunk):
        g = grad[i : i + chunk]
        nc = g.shape[0]
        gmat = np.moveaxis(g, 1, 3).reshape(nc * oh * ow, o)
        cols = np.ascontiguousarray(_im2col2d(x[i : i + chunk], kh, kw))
        dw += gmat.T @ cols.reshape(nc * oh * ow, c * kh * kw)
        dcols = (gmat @ wmat).reshape(nc, oh, ow, c, kh, kw)
        # col2im: scatter-add each kernel offset back onto the input
        dxc = dx[i : i + chunk]
        for ky in range(kh):
            for kx in range(kw):
                dxc[:, :, ky : ky + oh, kx : kx + ow] += np.moveaxis(
                    dcols[:, :, :, :, ky, kx], 3, 1
                )
    return dx, dw.reshape(w.shape), db


def conv1d_forward(x, w, b):
    """Length-preserving cross-correlation. x:(N,C,L) w:(O,C,k) b:(O,).

    Symmetric zero padding; k must be odd.
    """
    n, c, length = x.shape
    o, _, k = w.shape
    p = (k - 1) // 2
    xp = np.zeros((n, c, length + 2 * p), dtype=x.dtype)
    xp[:, :, p : p + length] = x
    s0, s1, s2 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(n, length, c, k), strides=(s0, s2, s1, s2)
    ).reshape(n * length, c * k)
    y = cols @ w.reshape(o, c * k).T
    out = np.ascontiguousarray(np.moveaxis(y.reshape(n, length, o), 2, 1))
    out += b[None, :, None]
    return out


def conv1d_backward(x, w, grad):
    n, c, length = x.shape
    o, _, k = w.shape
    p = (k - 1) // 2
    db = grad.sum(axis=(0, 2))
    xp = np.zeros((n, c, length + 2 * p), dtype=x.dtype)
    xp[:, :, p : p + length] = x
    s0, s1, s2 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(n, length, c, k), strides=(s0, s2, s1, s2)
    ).reshape(n * length, c * k)
    gmat = np.moveaxis(grad, 1, 2).reshape(n * length, o)
    dw = (gmat.T @ cols).reshape(w.shape)
    dcols = (gmat @ w.reshape(o, c * k)).reshape(n, length, c, k)
    dxp = np.zeros_like(xp)
    for kk in range(k):
        dxp[:, :, kk : kk + length] += np.moveaxis(dcols[:, :, :, kk], 2, 1)
    dx = dxp[:, :, p : p + length]
    return dx, dw, db


def maxpool2d_forward(x):
    """2x2/stride-2 max pool, trailing odd row/col dropped.

    Returns (out, argmax) where argmax holds the flat in-window index
    (row-major; ties resolve to the first index).
    """
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    win = x[:, :, : oh * 2, : ow * 2].reshape(n, c, oh, 2, ow, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    arg = win.argmax(axis=4).astype(np.int64)
    out = np.take_along_axis(win, arg[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2d_backward(argmax, grad, in_shape):
    n, c, h, w = in_shape
    oh, ow = h // 2, w // 2
    dwin = np.zeros((n, c, oh, ow, 4), dtype=grad.dtype)
    np.put_along_axis(dwin, argmax[..., None], grad[..., None], axis=4)
    dx = np.zeros(in_shape, dtype=grad.dtype)
    dx[:, :, : oh * 2, : ow * 2] = (
        dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * 2, ow * 2)
    )
    return dx


def block_match(ref, cur, cy, cx, half_block, radius, init_dy, init_dx):
    """Integer-displacement SSD block matching around seeded displacements.

    ref, cur: 2-D float images. cy, cx: int arrays of block centers (in ref).
    init_dy/init_dx: per-center integer displacement seeds.
    Returns (best_dy, best_dx, cost_neighborhood) where cost_neighborhood is
    (G, 3, 3) SSD values around the best displacement for sub-pixel fits
    (np.inf where the neighbor left the searched window).
    """
    h, w = ref.shape
    g = cy.shape[0]
    b = half_block
    side = 2 * radius + 1

    ry0 = np.clip(cy - b, 0, h - 2 * b)
    rx0 = np.clip(cx - b, 0, w - 2 * b)
    iy = ry0[:, None] + np.arange(2 * b)[None, :]
    ix = rx0[:, None] + np.arange(2 * b)[None, :]
    ref_blocks = ref[iy[:, :, None], ix[:, None, :]]  # (G, 2b, 2b)

    costs = np.full((g, side, side), np.inf, dtype=np.float64)
    for di in range(side):
        dy = di - radius
        for dj in range(side):
            dx = dj - radius
            ty0 = ry0 + init_dy + dy
            tx0 = rx0 + init_dx + dx
            ok = (ty0 >= 0) & (ty0 + 2 * b <= h) & (tx0 >= 0) & (tx0 + 2 * b <= w)
            if not ok.any():
                continue
            ty = np.clip(ty0, 0, h - 2 * b)
            tx = np.clip(tx0, 0, w - 2 * b)
            jy = ty[:, None] + np.arange(2 * b)[None, :]
            jx = tx[:, None] + np.arange(2 * b)[None, :]
            cur_blocks = cur[jy[:, :, None], jx[:, None, :]]
            d = (cur_blocks - ref_blocks).astype(np.float64)
            ssd = np.einsum("gij,gij->g", d, d)
            costs[:, di, dj] = np.where(ok, ssd, np.inf)

    best = costs.reshape(g, -1).argmin(axis=1)
    bi, bj = best // side, best % side
    best_dy = init_dy + bi - radius
    best_dx = init_dx + bj - radius

    neigh = np.full((g, 3, 3), np.inf, dtype=np.float64)
    for oi in (-1, 0, 1):
        for oj in (-1, 0, 1):
            ii, jj = bi + oi, bj + oj
            valid = (ii >= 0) & (ii < side) & (jj >= 0) & (jj < side)
            vals = costs[np.arange(g), np.clip(ii, 0, side - 1), np.clip(jj, 0, side - 1)]
            neigh[:, oi + 1, oj + 1] = np.where(valid, vals, np.inf)
    return best_dy, best_dx, neigh
