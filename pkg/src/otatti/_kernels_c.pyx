# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inspection kernels. Semantics mirror ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

cdef double ZERO_TOL = 1e-12


cdef void _select_top(double* a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    # quickselect: afterwards a[0:k] holds the k largest values (unordered)
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, mid
    cdef double pivot, tmp
    while lo < hi:
        mid = lo + (hi - lo) // 2
        # median of three, ordered descending
        if a[mid] > a[lo]:
            tmp = a[mid]; a[mid] = a[lo]; a[lo] = tmp
        if a[hi] > a[lo]:
            tmp = a[hi]; a[hi] = a[lo]; a[lo] = tmp
        if a[hi] > a[mid]:
            tmp = a[hi]; a[hi] = a[mid]; a[mid] = tmp
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] > pivot:
                i += 1
            while a[j] < pivot:
                j -= 1
            if i <= j:
                tmp = a[i]; a[i] = a[j]; a[j] = tmp
                i += 1
                j -= 1
        if k - 1 <= j:
            hi = j
        elif k - 1 >= i:
            lo = i
        else:
            return


def top_energy_fraction(const double[::1] v, Py_ssize_t k):
    cdef Py_ssize_t n = v.shape[0], i
    cdef double total = 0.0, top = 0.0
    if n == 0:
        return 0.0
    cdef double[::1] sq = np.empty(n, dtype=np.float64)
    for i in range(n):
        sq[i] = v[i] * v[i]
        total += sq[i]
    if total == 0.0:
        return 0.0
    if k >= n:
        return 1.0
    with nogil:
        _select_top(&sq[0], n, k)
    for i in range(k):
        top += sq[i]
    return top / total


def pairwise_distances(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j, c
    cdef double acc, diff
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for c in range(m):
                    diff = x[j, c] - x[i, c]
                    acc += diff * diff
                acc = sqrt(acc)
                out[i, j] = acc
                out[j, i] = acc
    return out_arr


cdef double VAR_REL_TOL = 1e-12


def shape_moments(const double[::1] g):
    cdef Py_ssize_t n = g.shape[0], i
    cdef long pos = 0, neg = 0
    cdef double mean = 0.0, c, c2, sd, m2 = 0.0, m3 = 0.0, m4 = 0.0
    for i in range(n):
        if g[i] >= ZERO_TOL:
            pos += 1
        elif g[i] <= -ZERO_TOL:
            neg += 1
        mean += g[i]
    if n == 0:
        return 0, 0, 0, 0.0, 0.0
    mean /= n
    for i in range(n):
        c = g[i] - mean
        m2 += c * c
    m2 /= n
    if m2 <= (VAR_REL_TOL * mean) * (VAR_REL_TOL * mean):
        return pos, neg, n - pos - neg, 0.0, 0.0
    # standardise first so tiny variances cannot underflow m2 ** 1.5
    sd = sqrt(m2)
    for i in range(n):
        c = (g[i] - mean) / sd
        c2 = c * c
        m3 += c2 * c
        m4 += c2 * c2
    return pos, neg, n - pos - neg, m3 / n, m4 / n - 3.0


def average_linkage_two(dist):
    cdef double[:, ::1] d = np.array(dist, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = d.shape[0], i, ai, bi_, a, b, bi = -1, bj = -1, c, n_active
    labels_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    if n <= 2:
        for i in range(n):
            labels[i] = i
        return labels_arr
    cdef cnp.int64_t[::1] active = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] owner = np.arange(n, dtype=np.int64)
    cdef double[::1] size = np.ones(n, dtype=np.float64)
    cdef double best, na, nb, v
    n_active = n
    while n_active > 2:
        best = INFINITY
        for ai in range(n_active):
            a = active[ai]
            for bi_ in range(ai + 1, n_active):
                b = active[bi_]
                if d[a, b] < best:
                    best = d[a, b]
                    bi = a
                    bj = b
        na = size[bi]
        nb = size[bj]
        for ai in range(n_active):
            c = active[ai]
            if c != bi and c != bj:
                v = (na * d[bi, c] + nb * d[bj, c]) / (na + nb)
                d[bi, c] = v
                d[c, bi] = v
        size[bi] = na + nb
        for i in range(n):
            if owner[i] == bj:
                owner[i] = bi
        # drop bj while keeping ``active`` sorted
        for ai in range(n_active):
            if active[ai] == bj:
                break
        for i in range(ai, n_active - 1):
            active[i] = active[i + 1]
        n_active -= 1
    for i in range(n):
        if owner[i] == active[1]:
            labels[i] = 1
    return labels_arr
