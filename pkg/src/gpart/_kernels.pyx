# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for partition construction and application.

Mirrors _kernels_py exactly: same PRNG constants, same swap and
accumulation order, so the two backends return bit-identical arrays.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

ctypedef cnp.uint64_t u64


cdef inline u64 _next(u64 *state) nogil:
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


def splitmix64_stream(u64 seed, Py_ssize_t count):
    """Raw splitmix64 outputs, mainly for cross-checking backends."""
    out = np.empty(count, dtype=np.uint64)
    cdef u64[::1] view = out
    cdef u64 state = seed
    cdef Py_ssize_t k
    for k in range(count):
        view[k] = _next(&state)
    return out


def shuffled_indices(u64 seed, Py_ssize_t n):
    """Fisher-Yates permutation of [0, n) driven by splitmix64(seed)."""
    perm = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] p = perm
    cdef u64 state = seed
    cdef u64 j
    cdef Py_ssize_t i
    cdef cnp.int64_t tmp
    for i in range(n - 1, 0, -1):
        j = _next(&state) % <u64>(i + 1)
        tmp = p[i]
        p[i] = p[<Py_ssize_t>j]
        p[<Py_ssize_t>j] = tmp
    return perm


def gather(const double[::1] values, const cnp.uint32_t[::1] assignment):
    cdef Py_ssize_t n = assignment.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = values[<Py_ssize_t>assignment[i]]
    return out


def group_sums(const double[::1] values, const cnp.uint32_t[::1] assignment, Py_ssize_t dim):
    cdef Py_ssize_t n = values.shape[0]
    out = np.zeros(dim, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[<Py_ssize_t>assignment[i]] += values[i]
    return out
