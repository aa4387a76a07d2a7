# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see _fallback.py for the reference)."""
import numpy as np

from libc.math cimport exp, expf, tanh, tanhf
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline void _gemm(char ta, char tb, int m, int n, int k, real alpha,
                       real* a, int lda, real* b, int ldb, real beta,
                       real* c, int ldc) noexcept nogil:
    # column-major BLAS; callers pass row-major operands swapped
    if real is float:
        sgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    else:
        return tanh(x)


cdef inline real _sig(real x) noexcept nogil:
    if real is float:
        return 1.0 / (1.0 + expf(-x))
    else:
        return 1.0 / (1.0 + exp(-x))


def lstm_forward(real[:, :, ::1] xg, real[:, ::1] w_h, real[:, ::1] h0, real[:, ::1] c0):
    cdef Py_ssize_t T = xg.shape[0], B = xg.shape[1], G = xg.shape[2]
    cdef Py_ssize_t H = G // 4
    cdef Py_ssize_t t, b, j
    dt = np.float32 if real is float else np.float64
    hs_arr = np.empty((T + 1, B, H), dtype=dt)
    cs_arr = np.empty((T + 1, B, H), dtype=dt)
    gates_arr = np.empty((T, B, G), dtype=dt)
    cdef real[:, :, ::1] hs = hs_arr
    cdef real[:, :, ::1] cs = cs_arr
    cdef real[:, :, ::1] gates = gates_arr
    cdef real c
    cdef real* z
    cdef real* cp
    cdef real* cn
    cdef real* hn
    hs[0, :, :] = h0
    cs[0, :, :] = c0
    if T == 0 or B == 0:
        return hs_arr, cs_arr, gates_arr
    with nogil:
        for t in range(T):
            gates[t, :, :] = xg[t, :, :]
            _gemm(c'N', c'N', <int>G, <int>B, <int>H, <real>1.0,
                  &w_h[0, 0], <int>G, &hs[t, 0, 0], <int>H, <real>1.0,
                  &gates[t, 0, 0], <int>G)
            for b in range(B):
                z = &gates[t, b, 0]
                cp = &cs[t, b, 0]
                cn = &cs[t + 1, b, 0]
                hn = &hs[t + 1, b, 0]
                for j in range(2 * H):
                    z[j] = _sig(z[j])
                for j in range(2 * H, 3 * H):
                    z[j] = _tanh(z[j])
                for j in range(3 * H, G):
                    z[j] = _sig(z[j])
                for j in range(H):
                    c = z[H + j] * cp[j] + z[j] * z[2 * H + j]
                    cn[j] = c
                    hn[j] = z[3 * H + j] * _tanh(c)
    return hs_arr, cs_arr, gates_arr


def lstm_backward(real[:, :, ::1] dh, real[:, ::1] dc_last, real[:, ::1] w_h,
                  real[:, :, ::1] hs, real[:, :, ::1] cs, real[:, :, ::1] gates):
    cdef Py_ssize_t T = dh.shape[0], B = dh.shape[1], H = dh.shape[2]
    cdef Py_ssize_t G = 4 * H
    cdef Py_ssize_t t, b, j
    dt = np.float32 if real is float else np.float64
    dz_arr = np.empty((T, B, G), dtype=dt)
    dh_next_arr = np.zeros((B, H), dtype=dt)
    dc_next_arr = np.array(dc_last, dtype=dt, copy=True)
    cdef real[:, :, ::1] dz = dz_arr
    cdef real[:, ::1] dh_next = dh_next_arr
    cdef real[:, ::1] dc_next = dc_next_arr
    cdef real ig, fg, gg, og, tc, dht, dc
    if T == 0 or B == 0:
        return dz_arr, dh_next_arr, dc_next_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    ig = gates[t, b, j]
                    fg = gates[t, b, H + j]
                    gg = gates[t, b, 2 * H + j]
                    og = gates[t, b, 3 * H + j]
                    tc = _tanh(cs[t + 1, b, j])
                    dht = dh[t, b, j] + dh_next[b, j]
                    dc = dc_next[b, j] + dht * og * (1 - tc * tc)
                    dz[t, b, j] = dc * gg * ig * (1 - ig)
                    dz[t, b, H + j] = dc * cs[t, b, j] * fg * (1 - fg)
                    dz[t, b, 2 * H + j] = dc * ig * (1 - gg * gg)
                    dz[t, b, 3 * H + j] = dht * tc * og * (1 - og)
                    dc_next[b, j] = dc * fg
            _gemm(c'T', c'N', <int>H, <int>B, <int>G, <real>1.0,
                  &w_h[0, 0], <int>G, &dz[t, 0, 0], <int>G, <real>0.0,
                  &dh_next[0, 0], <int>H)
    return dz_arr, dh_next_arr, dc_next_arr


def col2im(real[:, :, :, :, :, ::1] dcols, tuple out_shape, int kf, int kt, int sf, int st):
    cdef Py_ssize_t B = dcols.shape[0], Fo = dcols.shape[1], To = dcols.shape[2]
    cdef Py_ssize_t C = dcols.shape[3]
    cdef Py_ssize_t b, fo, to, c, i, j
    dt = np.float32 if real is float else np.float64
    dx_arr = np.zeros(out_shape, dtype=dt)
    cdef real[:, :, :, ::1] dx = dx_arr
    with nogil:
        for b in range(B):
            for fo in range(Fo):
                for to in range(To):
                    for c in range(C):
                        for i in range(kf):
                            for j in range(kt):
                                dx[b, c, fo * sf + i, to * st + j] += dcols[b, fo, to, c, i, j]
    return dx_arr


def edit_ops(ref, hyp):
    cdef long long[::1] r = np.ascontiguousarray(ref, dtype=np.int64)
    cdef long long[::1] h = np.ascontiguousarray(hyp, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], m = h.shape[0]
    cdef Py_ssize_t i, j
    cdef long long cost, best
    d_arr = np.empty((n + 1, m + 1), dtype=np.int64)
    cdef long long[:, ::1] d = d_arr
    cdef long long subs = 0, ins = 0, dels = 0
    with nogil:
        for i in range(n + 1):
            d[i, 0] = i
        for j in range(m + 1):
            d[0, j] = j
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                cost = 0 if r[i - 1] == h[j - 1] else 1
                best = d[i - 1, j - 1] + cost
                if d[i - 1, j] + 1 < best:
                    best = d[i - 1, j] + 1
                if d[i, j - 1] + 1 < best:
                    best = d[i, j - 1] + 1
                d[i, j] = best
        i = n
        j = m
        while i > 0 or j > 0:
            if i > 0 and j > 0:
                cost = 0 if r[i - 1] == h[j - 1] else 1
                if d[i, j] == d[i - 1, j - 1] + cost:
                    subs += cost
                    i -= 1
                    j -= 1
                    continue
            if i > 0 and d[i, j] == d[i - 1, j] + 1:
                dels += 1
                i -= 1
            else:
                ins += 1
                j -= 1
    return int(d[n, m]), int(subs), int(ins), int(dels)
