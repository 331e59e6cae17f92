# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transition kernels for the sub-density recursion."""

import numpy as np

from libc.math cimport erfc, exp

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476


def propagate(const double[::1] out_nodes, const double[::1] in_nodes,
              const double[::1] in_wv, double a, double m, double s):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n_out = out_nodes.shape[0]
    cdef Py_ssize_t n_in = in_nodes.shape[0]
    cdef double inv_s = 1.0 / s
    cdef double acc, t, z
    result = np.empty(n_out, dtype=np.float64)
    cdef double[::1] res = result
    with nogil:
        for i in range(n_out):
            acc = 0.0
            t = out_nodes[i] - m
            for j in range(n_in):
                z = (t - a * in_nodes[j]) * inv_s
                acc = acc + in_wv[j] * exp(-0.5 * z * z)
            res[i] = acc * INV_SQRT_2PI * inv_s
    return result


def cdf_mass(const double[::1] in_nodes, const double[::1] in_wv, double a,
             double m, double s, const double[::1] xs, bint upper):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n_x = xs.shape[0]
    cdef Py_ssize_t n_in = in_nodes.shape[0]
    cdef double inv_s = 1.0 / s
    cdef double sign = 1.0 if upper else -1.0
    cdef double acc, z
    result = np.empty(n_x, dtype=np.float64)
    cdef double[::1] res = result
    with nogil:
        for i in range(n_x):
            acc = 0.0
            for j in range(n_in):
                z = (xs[i] - a * in_nodes[j] - m) * inv_s
                acc = acc + in_wv[j] * 0.5 * erfc(sign * z * INV_SQRT2)
            res[i] = acc
    return result
