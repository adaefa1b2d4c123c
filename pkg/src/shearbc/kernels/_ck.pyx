# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: im2col convolutions backed by BLAS, pooling and
block matching as direct loops. Semantics mirror shearbc.kernels.pure."""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline void _gemm(real* a, real* b, real* c, int m, int k, int n,
                       real alpha, real beta) noexcept nogil:
    # row-major C(m,n) = alpha * A(m,k) @ B(k,n) + beta * C
    cdef char nt = b'N'
    if real is float:
        sgemm(&nt, &nt, &n, &m, &k, &alpha, <float*> b, &n, <float*> a, &k,
              &beta, <float*> c, &n)
    else:
        dgemm(&nt, &nt, &n, &m, &k, &alpha, <double*> b, &n, <double*> a, &k,
              &beta, <double*> c, &n)


cdef void _im2col(real[:, :, ::1] img, real[:, ::1] cols, int kh, int kw) noexcept nogil:
    cdef int c = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef int oh = h - kh + 1, ow = w - kw + 1
    cdef int ci, oy, ox, ky, kx, row, col
    for oy in range(oh):
        for ox in range(ow):
            row = oy * ow + ox
            col = 0
            for ci in range(c):
                for ky in range(kh):
                    for kx in range(kw):
                        cols[row, col] = img[ci, oy + ky, ox + kx]
                        col += 1


def _conv2d_forward_t(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b, out_arr, cols_arr):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = h - kh + 1, ow = wd - kw + 1
    cdef real[:, :, :, ::1] out = out_arr
    cdef real[:, ::1] cols = cols_arr
    cdef cnp.ndarray wmat_arr = np.ascontiguousarray(
        np.asarray(w).reshape(o, c * kh * kw).T)
    cdef real[:, ::1] wmat = wmat_arr
    ymat_arr = np.empty((oh * ow, o), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] ymat = ymat_arr
    cdef int i, oc, oy, ox
    with nogil:
        for i in range(n):
            _im2col(x[i], cols, kh, kw)
            _gemm(&cols[0, 0], &wmat[0, 0], &ymat[0, 0],
                  oh * ow, c * kh * kw, o, <real> 1.0, <real> 0.0)
            for oc in range(o):
                for oy in range(oh):
                    for ox in range(ow):
                        out[i, oc, oy, ox] = ymat[oy * ow + ox, oc] + b[oc]


def conv2d_forward(x, w, b):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    b = np.ascontiguousarray(b)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    out = np.empty((n, o, oh, ow), dtype=x.dtype)
    cols = np.empty((oh * ow, c * kh * kw), dtype=x.dtype)
    _conv2d_forward_t(x, w, b, out, cols)
    return out


def _conv2d_backward_t(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                       real[:, :, :, ::1] grad, dx_arr, dw_arr, db_arr,
                       cols_arr, gmat_arr, dcols_arr):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = grad.shape[2], ow = grad.shape[3]
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef real[:, ::1] dw = dw_arr          # (o, c*kh*kw)
    cdef real[::1] db = db_arr
    cdef real[:, ::1] cols = cols_arr      # (oh*ow, c*kh*kw)
    cdef real[:, ::1] gmat = gmat_arr      # (oh*ow, o)
    cdef real[:, ::1] dcols = dcols_arr    # (oh*ow, c*kh*kw)
    cdef cnp.ndarray wmat_arr = np.ascontiguousarray(np.asarray(w).reshape(o, c * kh * kw))
    cdef real[:, ::1] wmat = wmat_arr
    cdef int i, oc, oy, ox, ci, ky, kx, row, col
    cdef real gv
    with nogil:
        for i in range(n):
            for oc in range(o):
                for oy in range(oh):
                    for ox in range(ow):
                        gv = grad[i, oc, oy, ox]
                        gmat[oy * ow + ox, oc] = gv
                        db[oc] += gv
            _im2col(x[i], cols, kh, kw)
            # dw (o, ckk) += gmat^T (o, ohow) @ cols (ohow, ckk)
            _gemm_tn(&gmat[0, 0], &cols[0, 0], &dw[0, 0],
                     o, oh * ow, c * kh * kw)
            # dcols = gmat @ wmat
            _gemm(&gmat[0, 0], &wmat[0, 0], &dcols[0, 0],
                  oh * ow, o, c * kh * kw, <real> 1.0, <real> 0.0)
            for oy in range(oh):
                for ox in range(ow):
                    row = oy * ow + ox
                    col = 0
                    for ci in range(c):
                        for ky in range(kh):
                            for kx in range(kw):
                                dx[i, ci, oy + ky, ox + kx] += dcols[row, col]
                                col += 1


cdef inline void _gemm_tn(real* a, real* b, real* c, int m, int k, int n) noexcept nogil:
    # row-major C(m,n) += A^T where A is (k,m), B is (k,n)
    cdef char t = b'T', nt = b'N'
    cdef real one = 1.0
    if real is float:
        sgemm(&nt, &t, &n, &m, &k, <float*> &one, <float*> b, &n,
              <float*> a, &m, <float*> &one, <float*> c, &n)
    else:
        dgemm(&nt, &t, &n, &m, &k, <double*> &one, <double*> b, &n,
              <double*> a, &m, <double*> &one, <double*> c, &n)


def conv2d_backward(x, w, grad):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    grad = np.ascontiguousarray(grad)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh, ow = grad.shape[2], grad.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros((o, c * kh * kw), dtype=x.dtype)
    db = np.zeros(o, dtype=x.dtype)
    cols = np.empty((oh * ow, c * kh * kw), dtype=x.dtype)
    gmat = np.empty((oh * ow, o), dtype=x.dtype)
    dcols = np.empty((oh * ow, c * kh * kw), dtype=x.dtype)
    _conv2d_backward_t(x, w, grad, dx, dw, db, cols, gmat, dcols)
    return dx, dw.reshape(w.shape), db


cdef void _im2col1d(real[:, :, ::1] x, real[:, ::1] cols, int k, int p) noexcept nogil:
    # cols: (n * length, c * k), zero padding at the sequence ends
    cdef int n = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef int i, l, ci, kk, src, row, col
    for i in range(n):
        for l in range(length):
            row = i * length + l
            col = 0
            for ci in range(c):
                for kk in range(k):
                    src = l + kk - p
                    cols[row, col] = x[i, ci, src] if 0 <= src < length else <real> 0.0
                    col += 1


def _conv1d_forward_t(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b,
                      out_arr, cols_arr, ymat_arr, wmat_arr):
    cdef int n = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef int o = w.shape[0], k = w.shape[2], p = (w.shape[2] - 1) // 2
    cdef real[:, :, ::1] out = out_arr
    cdef real[:, ::1] cols = cols_arr
    cdef real[:, ::1] ymat = ymat_arr
    cdef real[:, ::1] wmat = wmat_arr
    cdef int i, oc, l
    with nogil:
        _im2col1d(x, cols, k, p)
        _gemm(&cols[0, 0], &wmat[0, 0], &ymat[0, 0], n * length, c * k, o,
              <real> 1.0, <real> 0.0)
        for i in range(n):
            for oc in range(o):
                for l in range(length):
                    out[i, oc, l] = ymat[i * length + l, oc] + b[oc]


def conv1d_forward(x, w, b):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    b = np.ascontiguousarray(b)
    n, c, length = x.shape
    o, _, k = w.shape
    out = np.empty((n, o, length), dtype=x.dtype)
    cols = np.empty((n * length, c * k), dtype=x.dtype)
    ymat = np.empty((n * length, o), dtype=x.dtype)
    wmat = np.ascontiguousarray(w.reshape(o, c * k).T)
    _conv1d_forward_t(x, w, b, out, cols, ymat, wmat)
    return out


def _conv1d_backward_t(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] grad,
                       dx_arr, dw_arr, db_arr, cols_arr, gmat_arr, dcols_arr):
    cdef int n = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef int o = w.shape[0], k = w.shape[2], p = (w.shape[2] - 1) // 2
    cdef real[:, :, ::1] dx = dx_arr
    cdef real[:, ::1] dw = dw_arr          # (o, c*k)
    cdef real[::1] db = db_arr
    cdef real[:, ::1] cols = cols_arr
    cdef real[:, ::1] gmat = gmat_arr      # (n*length, o)
    cdef real[:, ::1] dcols = dcols_arr
    cdef cnp.ndarray wmat_arr = np.ascontiguousarray(np.asarray(w).reshape(o, c * k))
    cdef real[:, ::1] wmat = wmat_arr
    cdef int i, oc, l, ci, kk, src, row, col
    cdef real g
    with nogil:
        for i in range(n):
            for oc in range(o):
                for l in range(length):
                    g = grad[i, oc, l]
                    gmat[i * length + l, oc] = g
                    db[oc] += g
        _im2col1d(x, cols, k, p)
        _gemm_tn(&gmat[0, 0], &cols[0, 0], &dw[0, 0], o, n * length, c * k)
        _gemm(&gmat[0, 0], &wmat[0, 0], &dcols[0, 0], n * length, o, c * k,
              <real> 1.0, <real> 0.0)
        for i in range(n):
            for l in range(length):
                row = i * length + l
                col = 0
                for ci in range(c):
                    for kk in range(k):
                        src = l + kk - p
                        if 0 <= src < length:
                            dx[i, ci, src] += dcols[row, col]
                        col += 1


def conv1d_backward(x, w, grad):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    grad = np.ascontiguousarray(grad)
    n, c, length = x.shape
    o, _, k = w.shape
    dx = np.zeros_like(x)
    dw = np.zeros((o, c * k), dtype=x.dtype)
    db = np.zeros(o, dtype=x.dtype)
    cols = np.empty((n * length, c * k), dtype=x.dtype)
    gmat = np.empty((n * length, o), dtype=x.dtype)
    dcols = np.empty((n * length, c * k), dtype=x.dtype)
    _conv1d_backward_t(x, w, grad, dx, dw, db, cols, gmat, dcols)
    return dx, dw.reshape(w.shape), db


def _maxpool2d_forward_t(real[:, :, :, ::1] x, out_arr, arg_arr):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = h // 2, ow = w // 2
    cdef real[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef int i, ci, oy, ox, wy, wx, besti
    cdef real best, v
    with nogil:
        for i in range(n):
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        best = x[i, ci, 2 * oy, 2 * ox]
                        besti = 0
                        for wy in range(2):
                            for wx in range(2):
                                v = x[i, ci, 2 * oy + wy, 2 * ox + wx]
                                if v > best:
                                    best = v
                                    besti = wy * 2 + wx
                        out[i, ci, oy, ox] = best
                        arg[i, ci, oy, ox] = besti


def maxpool2d_forward(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    _maxpool2d_forward_t(x, out, arg)
    return out, arg


def _maxpool2d_backward_t(long long[:, :, :, ::1] arg, real[:, :, :, ::1] grad, dx_arr):
    cdef int n = grad.shape[0], c = grad.shape[1], oh = grad.shape[2], ow = grad.shape[3]
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef int i, ci, oy, ox, a
    with nogil:
        for i in range(n):
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        a = <int> arg[i, ci, oy, ox]
                        dx[i, ci, 2 * oy + a // 2, 2 * ox + a % 2] += grad[i, ci, oy, ox]


def maxpool2d_backward(argmax, grad, in_shape):
    grad = np.ascontiguousarray(grad)
    argmax = np.ascontiguousarray(argmax, dtype=np.int64)
    dx = np.zeros(in_shape, dtype=grad.dtype)
    _maxpool2d_backward_t(argmax, grad, dx)
    return dx


def _block_match_t(real[:, ::1] ref, real[:, ::1] cur,
                   long long[::1] cy, long long[::1] cx, int b, int radius,
                   long long[::1] init_dy, long long[::1] init_dx,
                   costs_arr):
    cdef int h = ref.shape[0], w = ref.shape[1]
    cdef int g = cy.shape[0], side = 2 * radius + 1
    cdef double[:, :, ::1] costs = costs_arr
    cdef int gi, di, dj, yy, xx
    cdef long long ry0, rx0, ty0, tx0
    cdef double ssd, d
    with nogil:
        for gi in range(g):
            ry0 = cy[gi] - b
            if ry0 < 0: ry0 = 0
            if ry0 > h - 2 * b: ry0 = h - 2 * b
            rx0 = cx[gi] - b
            if rx0 < 0: rx0 = 0
            if rx0 > w - 2 * b: rx0 = w - 2 * b
            for di in range(side):
                for dj in range(side):
                    ty0 = ry0 + init_dy[gi] + di - radius
                    tx0 = rx0 + init_dx[gi] + dj - radius
                    if ty0 < 0 or ty0 + 2 * b > h or tx0 < 0 or tx0 + 2 * b > w:
                        continue
                    ssd = 0.0
                    for yy in range(2 * b):
                        for xx in range(2 * b):
                            d = <double> cur[ty0 + yy, tx0 + xx] - <double> ref[ry0 + yy, rx0 + xx]
                            ssd += d * d
                    costs[gi, di, dj] = ssd


def block_match(ref, cur, cy, cx, half_block, radius, init_dy, init_dx):
    ref = np.ascontiguousarray(ref)
    cur = np.ascontiguousarray(cur)
    cy = np.ascontiguousarray(cy, dtype=np.int64)
    cx = np.ascontiguousarray(cx, dtype=np.int64)
    init_dy = np.ascontiguousarray(init_dy, dtype=np.int64)
    init_dx = np.ascontiguousarray(init_dx, dtype=np.int64)
    g = cy.shape[0]
    side = 2 * radius + 1
    costs = np.full((g, side, side), np.inf, dtype=np.float64)
    _block_match_t(ref, cur, cy, cx, half_block, radius, init_dy, init_dx, costs)

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
