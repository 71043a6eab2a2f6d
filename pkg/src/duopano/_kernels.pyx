# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled resampling kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) nogil:
    i = i % n
    if i < 0:
        i += n
    return i


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


def sample_bilinear(src, u, v):
    cdef double[:, :, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t C = s.shape[0], H = s.shape[1], W = s.shape[2]
    cdef Py_ssize_t n = uu.shape[0]
    out_arr = np.empty((C, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t j, ch, x0, x1, y0, y1
    cdef double x, y, x0f, y0f, fx, fy, top, bot, a, b
    with nogil:
        for j in range(n):
            x = uu[j] - 0.5
            y = vv[j] - 0.5
            x0f = floor(x)
            y0f = floor(y)
            fx = x - x0f
            fy = y - y0f
            x0 = _wrap(<Py_ssize_t>x0f, W)
            x1 = _wrap(x0 + 1, W)
            y0 = <Py_ssize_t>y0f
            y1 = _clamp(y0 + 1, H)
            y0 = _clamp(y0, H)
            for ch in range(C):
                a = s[ch, y0, x0]
                b = s[ch, y0, x1]
                top = a + fx * (b - a)
                a = s[ch, y1, x0]
                b = s[ch, y1, x1]
                bot = a + fx * (b - a)
                out[ch, j] = top + fy * (bot - top)
    return out_arr


def nearest_index(u, v, Py_ssize_t H, Py_ssize_t W):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t n = uu.shape[0], j
    idx_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = idx_arr
    with nogil:
        for j in range(n):
            idx[j] = _clamp(<Py_ssize_t>floor(vv[j]), H) * W + _wrap(<Py_ssize_t>floor(uu[j]), W)
    return idx_arr


def sample_nearest(src, u, v):
    s = np.ascontiguousarray(src, dtype=np.float64)
    C, H, W = s.shape
    return s.reshape(C, H * W)[:, nearest_index(u, v, H, W)]


def splat_bilinear(values, u, v, Py_ssize_t H, Py_ssize_t W):
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t C = vals.shape[0], n = uu.shape[0]
    acc_arr = np.zeros((C, H * W), dtype=np.float64)
    weight_arr = np.zeros(H * W, dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef double[::1] weight = weight_arr
    cdef Py_ssize_t j, k, ch, x0, x1, y0, y1
    cdef Py_ssize_t idx[4]
    cdef double w[4]
    cdef double x, y, x0f, y0f, fx, fy
    with nogil:
        for j in range(n):
            x = uu[j] - 0.5
            y = vv[j] - 0.5
            x0f = floor(x)
            y0f = floor(y)
            fx = x - x0f
            fy = y - y0f
            x0 = _wrap(<Py_ssize_t>x0f, W)
            x1 = _wrap(x0 + 1, W)
            y0 = <Py_ssize_t>y0f
            y1 = _clamp(y0 + 1, H)
            y0 = _clamp(y0, H)
            idx[0] = y0 * W + x0
            idx[1] = y0 * W + x1
            idx[2] = y1 * W + x0
            idx[3] = y1 * W + x1
            w[0] = (1.0 - fx) * (1.0 - fy)
            w[1] = fx * (1.0 - fy)
            w[2] = (1.0 - fx) * fy
            w[3] = fx * fy
            for k in range(4):
                weight[idx[k]] += w[k]
                for ch in range(C):
                    acc[ch, idx[k]] += vals[ch, j] * w[k]
    return acc_arr.reshape(C, H, W), weight_arr.reshape(H, W)
