# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled elementwise/reduction kernels for the training hot path.

Contract-identical to ``ssl_lab._kernels_py``; see that module for docs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport copysign, fabs, sqrt

cnp.import_array()

NAME = "native"


def relu_forward(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def relu_grad_mask(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = 1.0 if x[i, j] > 0.0 else 0.0
    return out_arr


def srelu_forward(double[:, ::1] x, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double t
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                # select idiom + builtin copysign: branch-free, vectorizable
                t = fabs(x[i, j]) - b[j]
                t = t if t > 0.0 else 0.0
                out[i, j] = copysign(t, x[i, j])
    return out_arr


def srelu_grad_mask(double[:, ::1] x, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = 1.0 if fabs(x[i, j]) > b[j] else 0.0
    return out_arr


def row_norms(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double acc
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += x[i, j] * x[i, j]
            out[i] = sqrt(acc)
    return out_arr


def batchnorm_train_forward(double[:, ::1] y, double[::1] gamma,
                            double[::1] beta, double eps):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef double acc, mu, xh
    out_arr = np.empty((n, m), dtype=np.float64)
    xhat_arr = np.empty((n, m), dtype=np.float64)
    inv_std_arr = np.empty(m, dtype=np.float64)
    mean_arr = np.empty(m, dtype=np.float64)
    var_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] out = out_arr, xhat = xhat_arr
    cdef double[::1] inv_std = inv_std_arr, mean = mean_arr, var = var_arr
    with nogil:
        for j in range(m):
            acc = 0.0
            for i in range(n):
                acc += y[i, j]
            mean[j] = acc / n
        for j in range(m):
            mu = mean[j]
            acc = 0.0
            for i in range(n):
                acc += (y[i, j] - mu) * (y[i, j] - mu)
            var[j] = acc / n
            inv_std[j] = 1.0 / sqrt(var[j] + eps)
        for i in range(n):
            for j in range(m):
                xh = (y[i, j] - mean[j]) * inv_std[j]
                xhat[i, j] = xh
                out[i, j] = gamma[j] * xh + beta[j]
    return out_arr, xhat_arr, inv_std_arr, mean_arr, var_arr


def batchnorm_backward(double[:, ::1] dout, double[:, ::1] xhat,
                       double[::1] inv_std, double[::1] gamma):
    cdef Py_ssize_t n = dout.shape[0], m = dout.shape[1], i, j
    cdef double s1, s2, g
    dy_arr = np.empty((n, m), dtype=np.float64)
    dgamma_arr = np.empty(m, dtype=np.float64)
    dbeta_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] dy = dy_arr
    cdef double[::1] dgamma = dgamma_arr, dbeta = dbeta_arr
    with nogil:
        for j in range(m):
            s1 = 0.0  # sum of dout (-> dbeta)
            s2 = 0.0  # sum of dout * xhat (-> dgamma)
            for i in range(n):
                s1 += dout[i, j]
                s2 += dout[i, j] * xhat[i, j]
            dbeta[j] = s1
            dgamma[j] = s2
            g = gamma[j]
            # dxhat = dout * g; reuse s1, s2 scaled by g for its sums
            for i in range(n):
                dy[i, j] = (inv_std[j] / n) * (n * dout[i, j] * g
                                               - g * s1
                                               - xhat[i, j] * g * s2)
    return dy_arr, dgamma_arr, dbeta_arr
