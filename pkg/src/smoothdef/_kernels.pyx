# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-pixel filter inner loops.

Mirrors the contracts of ``_kernels_py``; the faster of the two is selected
at import time by ``smoothdef.kernels``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport free, malloc

cnp.import_array()

BACKEND_NAME = "cython"


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double da = (<const double*> a)[0]
    cdef double db = (<const double*> b)[0]
    if da < db:
        return -1
    if da > db:
        return 1
    return 0


cdef extern from "stdlib.h":
    void qsort(void* base, size_t nmemb, size_t size,
               int (*compar)(const void*, const void*)) nogil


def median_filter(const double[:, ::1] padded, int kernel_size):
    cdef int h = padded.shape[0] - kernel_size + 1
    cdef int w = padded.shape[1] - kernel_size + 1
    cdef int n = kernel_size * kernel_size
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* buf = <double*> malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef int i, j, a, b, t
    try:
        with nogil:
            for i in range(h):
                for j in range(w):
                    t = 0
                    for a in range(kernel_size):
                        for b in range(kernel_size):
                            buf[t] = padded[i + a, j + b]
                            t += 1
                    qsort(buf, n, sizeof(double), _cmp_double)
                    out[i, j] = buf[n // 2]
    finally:
        free(buf)
    return out_arr


def bilateral_filter(const double[:, ::1] padded, int diameter,
                     double sigma_space, double sigma_range):
    cdef int r = diameter // 2
    cdef int h = padded.shape[0] - diameter + 1
    cdef int w = padded.shape[1] - diameter + 1
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    spatial_arr = np.empty((diameter, diameter), dtype=np.float64)
    cdef double[:, ::1] spatial = spatial_arr
    cdef int a, b, i, j
    cdef double inv2ss = 1.0 / (2.0 * sigma_space * sigma_space)
    cdef double inv2sr = 1.0 / (2.0 * sigma_range * sigma_range)
    for a in range(diameter):
        for b in range(diameter):
            spatial[a, b] = exp(-((a - r) * (a - r) + (b - r) * (b - r)) * inv2ss)
    cdef double center, v, wgt, num, den
    with nogil:
        for i in range(h):
            for j in range(w):
                center = padded[i + r, j + r]
                num = 0.0
                den = 0.0
                for a in range(diameter):
                    for b in range(diameter):
                        v = padded[i + a, j + b]
                        wgt = spatial[a, b] * exp(-(v - center) * (v - center) * inv2sr)
                        num += wgt * v
                        den += wgt
                out[i, j] = num / den
    return out_arr


def nlm_filter(const double[:, ::1] padded, int height, int width,
               int patch_radius, int search_radius, double h_filter,
               const double[:, ::1] patch_kernel):
    cdef int p = patch_radius
    cdef int s = search_radius
    cdef int k = 2 * p + 1
    cdef double h2 = h_filter * h_filter
    out_arr = np.empty((height, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j, dy, dx, a, b, ci, cj
    cdef double dist, d, wgt, num, den
    with nogil:
        for i in range(height):
            for j in range(width):
                # center pixel sits at (i + s + p, j + s + p) in padded coords
                ci = i + s + p
                cj = j + s + p
                num = 0.0
                den = 0.0
                for dy in range(-s, s + 1):
                    for dx in range(-s, s + 1):
                        dist = 0.0
                        for a in range(k):
                            for b in range(k):
                                d = (padded[ci + a - p, cj + b - p]
                                     - padded[ci + dy + a - p, cj + dx + b - p])
                                dist += patch_kernel[a, b] * d * d
                        wgt = exp(-dist / h2)
                        num += wgt * padded[ci + dy, cj + dx]
                        den += wgt
                out[i, j] = num / den
    return out_arr


def diffusion_step(const double[:, ::1] chan, double edge_scale,
                   double time_step, bint exponential):
    cdef int h = chan.shape[0]
    cdef int w = chan.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int i, j, d
    cdef int ii, jj
    cdef double v, delta, g, c, acc
    cdef int[4] di = [-1, 1, 0, 0]
    cdef int[4] dj = [0, 0, -1, 1]
    with nogil:
        for i in range(h):
            for j in range(w):
                v = chan[i, j]
                acc = v
                for d in range(4):
                    ii = i + di[d]
                    jj = j + dj[d]
                    if ii < 0:
                        ii = 0
                    elif ii >= h:
                        ii = h - 1
                    if jj < 0:
                        jj = 0
                    elif jj >= w:
                        jj = w - 1
                    delta = chan[ii, jj] - v
                    g = (delta / edge_scale) * (delta / edge_scale)
                    c = exp(-g) if exponential else 1.0 / (1.0 + g)
                    acc += time_step * c * delta
                out[i, j] = acc
    return out_arr
