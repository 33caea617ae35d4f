# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: blocked L1 cross-distances and edge segment sums.

Semantics must stay identical to kgalign._kernels.fallback; the test suite
runs both backends against each other.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def l1_cross(cnp.float64_t[:, ::1] queries, cnp.float64_t[:, ::1] candidates):
    """Pairwise L1 distances: out[i, j] = sum_k |queries[i,k] - candidates[j,k]|."""
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t nc = candidates.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    if candidates.shape[1] != d:
        raise ValueError("dimension mismatch")
    out_arr = np.empty((nq, nc), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(nq):
        for j in range(nc):
            acc = 0.0
            for k in range(d):
                diff = queries[i, k] - candidates[j, k]
                acc += diff if diff >= 0.0 else -diff
            out[i, j] = acc
    return out_arr


def segment_sum(cnp.float64_t[:, ::1] values, cnp.int64_t[::1] segments,
                Py_ssize_t num_segments):
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``segments``."""
    cdef Py_ssize_t e = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    if segments.shape[0] != e:
        raise ValueError("segment ids must match value rows")
    out_arr = np.zeros((num_segments, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef cnp.int64_t s
    for i in range(e):
        s = segments[i]
        if s < 0 or s >= num_segments:
            raise IndexError("segment id out of range")
        for k in range(d):
            out[s, k] += values[i, k]
    return out_arr
