# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels: masked softmax, layer norm and LCS.

Every function takes 2-D C-contiguous arrays (rows x features). Reductions
run left to right within a row so results do not depend on other rows.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()

ctypedef fused real:
    float
    double


def masked_softmax(real[:, ::1] x, const unsigned char[:, ::1] keep):
    cdef Py_ssize_t R = x.shape[0], C = x.shape[1], i, j
    out_arr = np.zeros((R, C), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_arr
    cdef double m, s, e
    for i in range(R):
        m = -INFINITY
        for j in range(C):
            if keep[i, j] and x[i, j] > m:
                m = x[i, j]
        if m == -INFINITY:
            raise ValueError(f"attention row {i} has no unmasked key")
        s = 0.0
        for j in range(C):
            if keep[i, j]:
                e = exp(x[i, j] - m)
                out[i, j] = <real>e
                s += e
        for j in range(C):
            if keep[i, j]:
                out[i, j] = <real>(out[i, j] / s)
    return out_arr


def softmax_backward(real[:, ::1] y, real[:, ::1] gy):
    cdef Py_ssize_t R = y.shape[0], C = y.shape[1], i, j
    gx_arr = np.empty((R, C), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] gx = gx_arr
    cdef double dot
    for i in range(R):
        dot = 0.0
        for j in range(C):
            dot += y[i, j] * gy[i, j]
        for j in range(C):
            gx[i, j] = <real>(y[i, j] * (gy[i, j] - dot))
    return gx_arr


def layer_norm_forward(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t R = x.shape[0], C = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    y_arr = np.empty((R, C), dtype=dt)
    xhat_arr = np.empty((R, C), dtype=dt)
    rstd_arr = np.empty(R, dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] rstd = rstd_arr
    cdef double mean, var, d, r
    for i in range(R):
        mean = 0.0
        for j in range(C):
            mean += x[i, j]
        mean /= C
        var = 0.0
        for j in range(C):
            d = x[i, j] - mean
            var += d * d
        var /= C
        r = 1.0 / sqrt(var + eps)
        rstd[i] = <real>r
        for j in range(C):
            xhat[i, j] = <real>((x[i, j] - mean) * r)
            y[i, j] = xhat[i, j] * gain[j] + bias[j]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_backward(real[:, ::1] gy, real[:, ::1] xhat, real[::1] rstd, real[::1] gain):
    cdef Py_ssize_t R = gy.shape[0], C = gy.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    gx_arr = np.empty((R, C), dtype=dt)
    acc_gain = np.zeros(C, dtype=np.float64)
    acc_bias = np.zeros(C, dtype=np.float64)
    cdef real[:, ::1] gx = gx_arr
    cdef double[::1] gg = acc_gain
    cdef double[::1] gb = acc_bias
    cdef double s1, s2, g
    for i in range(R):
        s1 = 0.0
        s2 = 0.0
        for j in range(C):
            g = gy[i, j] * gain[j]
            s1 += g
            s2 += g * xhat[i, j]
            gg[j] += gy[i, j] * xhat[i, j]
            gb[j] += gy[i, j]
        s1 /= C
        s2 /= C
        for j in range(C):
            g = gy[i, j] * gain[j]
            gx[i, j] = <real>(rstd[i] * (g - s1 - xhat[i, j] * s2))
    return gx_arr, acc_gain.astype(dt), acc_bias.astype(dt)


def lcs_length(const long long[::1] a, const long long[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    row_arr = np.zeros(m + 1, dtype=np.int64)
    cdef long long[::1] row = row_arr
    cdef long long diag, tmp
    for i in range(n):
        diag = 0
        for j in range(m):
            tmp = row[j + 1]
            if a[i] == b[j]:
                row[j + 1] = diag + 1
            elif row[j] > row[j + 1]:
                row[j + 1] = row[j]
            diag = tmp
    return int(row[m])
