# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Edge-loop kernels for the graph-attention layer.

Matrix products stay in numpy/BLAS; these loops cover the per-edge attention
computation, the segment softmax grouped by destination node, and their
reverse-mode counterparts.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1

cnp.import_array()


def edge_forward(double[:, ::1] Z, double[::1] a,
                 long[::1] src, long[::1] dst, long[::1] offsets,
                 double slope, bint activate):
    cdef Py_ssize_t E = src.shape[0]
    cdef Py_ssize_t N = Z.shape[0]
    cdef Py_ssize_t D = Z.shape[1]
    cdef Py_ssize_t e, i, k, start, end

    pre_np = np.empty(E, dtype=np.float64)
    alpha_np = np.empty(E, dtype=np.float64)
    S_np = np.zeros((N, D), dtype=np.float64)
    out_np = np.empty((N, D), dtype=np.float64)
    cdef double[::1] pre = pre_np
    cdef double[::1] alpha = alpha_np
    cdef double[:, ::1] S = S_np
    cdef double[:, ::1] out = out_np

    cdef double acc, m, denom, lrelu, v
    for e in range(E):
        acc = 0.0
        for k in range(D):
            acc += Z[dst[e], k] * a[k] + Z[src[e], k] * a[D + k]
        pre[e] = acc

    for i in range(N):
        start = offsets[i]
        end = offsets[i + 1] if i + 1 < N else E
        m = -1e300
        for e in range(start, end):
            lrelu = pre[e] if pre[e] > 0 else slope * pre[e]
            alpha[e] = lrelu
            if lrelu > m:
                m = lrelu
        denom = 0.0
        for e in range(start, end):
            alpha[e] = exp(alpha[e] - m)
            denom += alpha[e]
        for e in range(start, end):
            alpha[e] /= denom

    for e in range(E):
        for k in range(D):
            S[dst[e], k] += alpha[e] * Z[src[e], k]

    for i in range(N):
        for k in range(D):
            v = S[i, k]
            out[i, k] = v if (v > 0 or not activate) else expm1(v)

    return pre_np, alpha_np, S_np, out_np


def edge_backward(double[:, ::1] Z, double[::1] a,
                  long[::1] src, long[::1] dst, long[::1] offsets,
                  double slope, bint activate,
                  double[::1] pre, double[::1] alpha, double[:, ::1] S,
                  double[:, ::1] dOut):
    cdef Py_ssize_t E = src.shape[0]
    cdef Py_ssize_t N = Z.shape[0]
    cdef Py_ssize_t D = Z.shape[1]
    cdef Py_ssize_t e, i, k, start, end

    dS_np = np.empty((N, D), dtype=np.float64)
    dZ_np = np.zeros((N, D), dtype=np.float64)
    da_np = np.zeros(2 * D, dtype=np.float64)
    cdef double[:, ::1] dS = dS_np
    cdef double[:, ::1] dZ = dZ_np
    cdef double[::1] da = da_np

    for i in range(N):
        for k in range(D):
            if activate and S[i, k] <= 0:
                dS[i, k] = dOut[i, k] * exp(S[i, k])
            else:
                dS[i, k] = dOut[i, k]

    dalpha_np = np.empty(E, dtype=np.float64)
    cdef double[::1] dalpha = dalpha_np
    cdef double acc, t, dpre
    for e in range(E):
        acc = 0.0
        for k in range(D):
            acc += dS[dst[e], k] * Z[src[e], k]
            dZ[src[e], k] += alpha[e] * dS[dst[e], k]
        dalpha[e] = acc

    for i in range(N):
        start = offsets[i]
        end = offsets[i + 1] if i + 1 < N else E
        t = 0.0
        for e in range(start, end):
            t += alpha[e] * dalpha[e]
        for e in range(start, end):
            dpre = alpha[e] * (dalpha[e] - t)
            if pre[e] <= 0:
                dpre *= slope
            for k in range(D):
                da[k] += dpre * Z[dst[e], k]
                da[D + k] += dpre * Z[src[e], k]
                dZ[dst[e], k] += dpre * a[k]
                dZ[src[e], k] += dpre * a[D + k]

    return dZ_np, da_np
