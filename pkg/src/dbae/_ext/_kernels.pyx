# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``dbae.kernels`` for the dispatching wrappers."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expf, log

cnp.import_array()

ctypedef fused real:
    float
    double

cdef double LOG_2PI = 1.8378770664093453


def silu_forward(const real[::1] x, real[::1] y, real[::1] sig):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef real s
    with nogil:
        for i in range(n):
            if real is float:
                s = 1.0 / (1.0 + expf(-x[i]))
            else:
                s = 1.0 / (1.0 + exp(-x[i]))
            sig[i] = s
            y[i] = x[i] * s


def silu_backward(const real[::1] g, const real[::1] x, const real[::1] sig, real[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s
    with nogil:
        for i in range(n):
            s = sig[i]
            out[i] = <real>(g[i] * s * (1.0 + x[i] * (1.0 - s)))


def affine_sde_paths(double[::1] x, const double[::1] y, const double[::1] drift_x,
                     const double[::1] drift_y, const double[::1] vol, const double[:, ::1] noise,
                     const cnp.int64_t[::1] record, double[:, ::1] out):
    cdef Py_ssize_t k, i, r = 0
    cdef Py_ssize_t n = x.shape[0], steps = drift_x.shape[0], nrec = record.shape[0]
    cdef double a, b, c
    with nogil:
        while r < nrec and record[r] == 0:
            for i in range(n):
                out[r, i] = x[i]
            r += 1
        for k in range(steps):
            a = drift_x[k]
            b = drift_y[k]
            c = vol[k]
            for i in range(n):
                x[i] = x[i] + a * x[i] + b * y[i] + c * noise[k, i]
            while r < nrec and record[r] == k + 1:
                for i in range(n):
                    out[r, i] = x[i]
                r += 1


def pairwise_gauss_logpdf(const double[:, ::1] z, const double[:, ::1] mu,
                          const double[:, ::1] logsig, double[:, :, ::1] out):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t bz = z.shape[0], bm = mu.shape[0], l = z.shape[1]
    cdef double u
    with nogil:
        for i in range(bz):
            for j in range(bm):
                for k in range(l):
                    u = (z[i, k] - mu[j, k]) * exp(-logsig[j, k])
                    out[i, j, k] = -0.5 * LOG_2PI - logsig[j, k] - 0.5 * u * u
