# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations.

Same contract as ``invnet._kernels_np``: C-contiguous float64 in and out,
no validation.  The matrix products go through BLAS dgemm; bias addition,
ReLU, softmax and sigmoid are fused loops, which removes the temporaries
the numpy fallback allocates in the hot training path.
"""

import numpy as np

from libc.math cimport exp, nextafter
from scipy.linalg.cython_blas cimport dgemm

cdef double _SIG_LO = 2.2250738585072014e-308   # smallest normal float64
cdef double _SIG_HI = nextafter(1.0, 0.0)

# All dgemm calls below use the row-major-as-transposed-column-major trick:
# for row-major C = A @ B, compute column-major C^T = B^T @ A^T.


def affine_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef int batch = x.shape[0]
    cdef int fin = x.shape[1]
    cdef int fout = w.shape[0]
    out_arr = np.empty((batch, fout), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double one = 1.0, zero = 0.0
    cdef int i, j
    if batch > 0 and fin > 0:
        # out = x @ w.T
        dgemm("T", "N", &fout, &batch, &fin, &one,
              &w[0, 0], &fin, &x[0, 0], &fin, &zero, &out[0, 0], &fout)
        for i in range(batch):
            for j in range(fout):
                out[i, j] += b[j]
    else:
        for i in range(batch):
            for j in range(fout):
                out[i, j] = b[j]
    return out_arr


def affine_backward(double[:, ::1] g, double[:, ::1] x, double[:, ::1] w):
    cdef int batch = g.shape[0]
    cdef int fout = g.shape[1]
    cdef int fin = x.shape[1]
    gx_arr = np.empty((batch, fin), dtype=np.float64)
    gw_arr = np.empty((fout, fin), dtype=np.float64)
    gb_arr = np.zeros(fout, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double one = 1.0, zero = 0.0
    cdef int i, j
    if batch > 0 and fout > 0 and fin > 0:
        # grad_x = g @ w
        dgemm("N", "N", &fin, &batch, &fout, &one,
              &w[0, 0], &fin, &g[0, 0], &fout, &zero, &gx[0, 0], &fin)
        # grad_w = g.T @ x
        dgemm("N", "T", &fin, &fout, &batch, &one,
              &x[0, 0], &fin, &g[0, 0], &fout, &zero, &gw[0, 0], &fin)
    else:
        gx_arr[...] = 0.0
        gw_arr[...] = 0.0
    for i in range(batch):
        for j in range(fout):
            gb[j] += g[i, j]
    return gx_arr, gw_arr, gb_arr


def relu(double[:, ::1] x):
    cdef int n = x.shape[0]
    cdef int m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j
    for i in range(n):
        for j in range(m):
            out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_backward(double[:, ::1] g, double[:, ::1] x):
    cdef int n = x.shape[0]
    cdef int m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def softmax_rows(double[:, ::1] z):
    cdef int n = z.shape[0]
    cdef int c = z.shape[1]
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j
    cdef double m, s
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(c):
            out[i, j] = exp(z[i, j] - m)
            s += out[i, j]
        for j in range(c):
            out[i, j] /= s
    return out_arr


def sigmoid(double[:, ::1] z):
    cdef int n = z.shape[0]
    cdef int m = z.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j
    cdef double v, e
    for i in range(n):
        for j in range(m):
            v = z[i, j]
            if v >= 0.0:
                v = 1.0 / (1.0 + exp(-v))
            else:
                e = exp(v)
                v = e / (1.0 + e)
            if v < _SIG_LO:
                v = _SIG_LO
            elif v > _SIG_HI:
                v = _SIG_HI
            out[i, j] = v
    return out_arr
