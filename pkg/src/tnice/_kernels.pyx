# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-shot kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def left_step(const double[:, ::1] left, const double[:, :, ::1] t, const long long[::1] k):
    cdef Py_ssize_t n_shots = left.shape[0], chi_l = t.shape[0], chi_r = t.shape[2]
    cdef Py_ssize_t u, a, b
    cdef long long kk
    cdef double la
    out_arr = np.zeros((n_shots, chi_r))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for u in range(n_shots):
            kk = k[u]
            for a in range(chi_l):
                la = left[u, a]
                if la == 0.0:
                    continue
                for b in range(chi_r):
                    out[u, b] += la * t[a, kk, b]
    return out_arr


def right_step(const double[:, ::1] right, const double[:, :, ::1] t, const long long[::1] k):
    cdef Py_ssize_t n_shots = right.shape[0], chi_l = t.shape[0], chi_r = t.shape[2]
    cdef Py_ssize_t u, a, b
    cdef long long kk
    cdef double acc
    out_arr = np.empty((n_shots, chi_l))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for u in range(n_shots):
            kk = k[u]
            for a in range(chi_l):
                acc = 0.0
                for b in range(chi_r):
                    acc += t[a, kk, b] * right[u, b]
                out[u, a] = acc
    return out_arr


def chain_values(tensors, outcomes):
    cols = np.ascontiguousarray(np.asarray(outcomes, dtype=np.int64).T)
    cdef Py_ssize_t site
    v = np.ones((cols.shape[1], 1))
    for site in range(cols.shape[0]):
        v = left_step(v, tensors[site], cols[site])
    return v[:, 0].copy()


def moment_blocks(const double[:, ::1] left, const double[:, ::1] right, const long long[::1] k,
                  const double[::1] w, Py_ssize_t s):
    cdef Py_ssize_t n_shots = left.shape[0], chi_l = left.shape[1], chi_r = right.shape[1]
    cdef Py_ssize_t side = chi_l * chi_r
    cdef Py_ssize_t u, i, j, a, b
    cdef long long kk
    cdef double xi, wu
    out_arr = np.zeros((s, side, side))
    cdef double[:, :, ::1] out = out_arr
    x_arr = np.empty(side)
    cdef double[::1] x = x_arr
    with nogil:
        for u in range(n_shots):
            kk = k[u]
            wu = w[u]
            for a in range(chi_l):
                for b in range(chi_r):
                    x[a * chi_r + b] = left[u, a] * right[u, b]
            # upper triangle only; mirrored below
            for i in range(side):
                xi = wu * x[i]
                if xi == 0.0:
                    continue
                for j in range(i, side):
                    out[kk, i, j] += xi * x[j]
        for kk in range(s):
            for i in range(side):
                for j in range(i + 1, side):
                    out[kk, j, i] = out[kk, i, j]
    return out_arr
