# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for bitmap containers and nested-loop joins."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint16_t, uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def array_and_count(const uint16_t[::1] a, const uint16_t[::1] b):
    cdef Py_ssize_t i = 0, j = 0, na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t n = 0
    with nogil:
        while i < na and j < nb:
            if a[i] < b[j]:
                i += 1
            elif a[i] > b[j]:
                j += 1
            else:
                n += 1
                i += 1
                j += 1
    return n


def array_and(const uint16_t[::1] a, const uint16_t[::1] b):
    cdef Py_ssize_t i = 0, j = 0, na = a.shape[0], nb = b.shape[0], n = 0
    out = np.empty(min(na, nb), dtype=np.uint16)
    cdef uint16_t[::1] o = out
    with nogil:
        while i < na and j < nb:
            if a[i] < b[j]:
                i += 1
            elif a[i] > b[j]:
                j += 1
            else:
                o[n] = a[i]
                n += 1
                i += 1
                j += 1
    return out[:n]


def bitset_and_count(const uint64_t[::1] a, const uint64_t[::1] b):
    cdef Py_ssize_t i, n = 0
    with nogil:
        for i in range(a.shape[0]):
            n += __builtin_popcountll(a[i] & b[i])
    return n


def bitset_and3_count(const uint64_t[::1] a, const uint64_t[::1] b, const uint64_t[::1] c):
    cdef Py_ssize_t i, n = 0
    with nogil:
        for i in range(a.shape[0]):
            n += __builtin_popcountll(a[i] & b[i] & c[i])
    return n


def array_bitset_count(const uint16_t[::1] a, const uint64_t[::1] bits):
    cdef Py_ssize_t i, n = 0
    cdef uint16_t v
    with nogil:
        for i in range(a.shape[0]):
            v = a[i]
            n += (bits[v >> 6] >> (v & 63)) & 1
    return n


def array_bitset_and(const uint16_t[::1] a, const uint64_t[::1] bits):
    cdef Py_ssize_t i, n = 0
    cdef uint16_t v
    out = np.empty(a.shape[0], dtype=np.uint16)
    cdef uint16_t[::1] o = out
    with nogil:
        for i in range(a.shape[0]):
            v = a[i]
            if (bits[v >> 6] >> (v & 63)) & 1:
                o[n] = v
                n += 1
    return out[:n]


def nested_loop_pairs(const int64_t[::1] lk, const int64_t[::1] rk):
    """All (i, j) with lk[i] == rk[j], by exhaustive comparison."""
    cdef Py_ssize_t i, j, n = 0, nl = lk.shape[0], nr = rk.shape[0]
    cdef int64_t v
    with nogil:
        for i in range(nl):
            v = lk[i]
            for j in range(nr):
                if rk[j] == v:
                    n += 1
    li = np.empty(n, dtype=np.int64)
    ri = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] lo = li
    cdef int64_t[::1] ro = ri
    n = 0
    with nogil:
        for i in range(nl):
            v = lk[i]
            for j in range(nr):
                if rk[j] == v:
                    lo[n] = i
                    ro[n] = j
                    n += 1
    return li, ri
