# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused loops over contiguous float64 arrays.

Semantics mirror unirqr.kernels.reference exactly (up to floating-point
summation order); the dispatcher in unirqr.kernels selects this module
when it has been built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh

cnp.import_array()

cdef double GELU_C = sqrt(2.0 / 3.14159265358979323846)
cdef double GELU_A = 0.044715


def softmax_rows(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double row_max, total
    for i in range(n):
        row_max = x[i, 0]
        for j in range(1, m):
            if x[i, j] > row_max:
                row_max = x[i, j]
        total = 0.0
        for j in range(m):
            out[i, j] = exp(x[i, j] - row_max)
            total += out[i, j]
        for j in range(m):
            out[i, j] /= total
    return out_arr


def softmax_backward_rows(double[:, ::1] p, double[:, ::1] dp):
    cdef Py_ssize_t n = p.shape[0], m = p.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double inner
    for i in range(n):
        inner = 0.0
        for j in range(m):
            inner += dp[i, j] * p[i, j]
        for j in range(m):
            out[i, j] = p[i, j] * (dp[i, j] - inner)
    return out_arr


def layernorm_forward(double[:, ::1] x, double[::1] gain, double[::1] bias,
                      double eps=1e-5):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    y_arr = np.empty((n, d), dtype=np.float64)
    mean_arr = np.empty(n, dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[::1] mean = mean_arr
    cdef double[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, diff, r
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            diff = x[i, j] - mu
            var += diff * diff
        var /= d
        r = 1.0 / sqrt(var + eps)
        mean[i] = mu
        rstd[i] = r
        for j in range(d):
            y[i, j] = (x[i, j] - mu) * r * gain[j] + bias[j]
    return y_arr, mean_arr, rstd_arr


def layernorm_backward(double[:, ::1] dy, double[:, ::1] x, double[::1] gain,
                       double[::1] mean, double[::1] rstd):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    dx_arr = np.empty((n, d), dtype=np.float64)
    dgain_arr = np.zeros(d, dtype=np.float64)
    dbias_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    cdef Py_ssize_t i, j
    cdef double xhat, dxhat, m1, m2
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            m1 += dxhat
            m2 += dxhat * xhat
            dgain[j] += dy[i, j] * xhat
            dbias[j] += dy[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (dxhat - m1 - xhat * m2)
    return dx_arr, dgain_arr, dbias_arr


def gelu_forward(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = 0.5 * v * (1.0 + tanh(GELU_C * (v + GELU_A * v * v * v)))
    return out_arr


def gelu_backward(double[:, ::1] x, double[:, ::1] dy):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double v, t, du
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            t = tanh(GELU_C * (v + GELU_A * v * v * v))
            du = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
            out[i, j] = dy[i, j] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out_arr


def cross_entropy_forward(double[:, ::1] logits, long[::1] labels, long ignore_id):
    cdef Py_ssize_t n = logits.shape[0], v = logits.shape[1]
    losses_arr = np.zeros(n, dtype=np.float64)
    probs_arr = np.empty((n, v), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] probs = probs_arr
    cdef Py_ssize_t i, j
    cdef double row_max, total
    for i in range(n):
        row_max = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > row_max:
                row_max = logits[i, j]
        total = 0.0
        for j in range(v):
            probs[i, j] = exp(logits[i, j] - row_max)
            total += probs[i, j]
        for j in range(v):
            probs[i, j] /= total
        if labels[i] != ignore_id:
            losses[i] = -log(probs[i, labels[i]])
    return losses_arr, probs_arr


def cross_entropy_backward(double[:, ::1] probs, long[::1] labels,
                           double[::1] row_scale, long ignore_id):
    cdef Py_ssize_t n = probs.shape[0], v = probs.shape[1]
    out_arr = np.empty((n, v), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        if labels[i] == ignore_id:
            for j in range(v):
                out[i, j] = 0.0
        else:
            for j in range(v):
                out[i, j] = probs[i, j] * row_scale[i]
            out[i, labels[i]] -= row_scale[i]
    return out_arr
