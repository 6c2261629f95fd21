# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled descent and leaf-mean kernels for centered trees.

Trees are stored in heap order: node i has children 2i+1 (lower half)
and 2i+2 (upper half); ``coords[i]`` is the coordinate split at node i.
Quantiles enter as integer codes ``floor(u * 2**depth)``; the branch taken
at the (c+1)-th split on coordinate j is bit ``depth-1-c`` of the code.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport int64_t

cnp.import_array()


def dyadic_codes(const double[:, ::1] U, int depth):
    """Integer codes floor(u * 2**depth), computed exactly."""
    cdef Py_ssize_t m = U.shape[0], p = U.shape[1], i, j
    cdef double scale = <double> ((<int64_t> 1) << depth)
    out = np.empty((m, p), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(p):
                o[i, j] = <int64_t> (U[i, j] * scale)
    return out


cdef inline Py_ssize_t _descend(const int64_t* code, const int* coords, int depth,
                                int* counts, int p) noexcept nogil:
    cdef Py_ssize_t node = 0
    cdef int level, j, c
    for j in range(p):
        counts[j] = 0
    for level in range(depth):
        j = coords[node]
        c = counts[j]
        counts[j] = c + 1
        node = 2 * node + 1 + ((code[j] >> (depth - 1 - c)) & 1)
    return node - ((<Py_ssize_t> 1 << depth) - 1)


def leaf_index(const double[:, ::1] U, const int[::1] coords, int depth):
    """Leaf number (0 .. 2**depth - 1) of every row of U."""
    cdef Py_ssize_t m = U.shape[0], i
    cdef int p = U.shape[1]
    codes_arr = dyadic_codes(U, depth)
    cdef const int64_t[:, ::1] codes = codes_arr
    out = np.empty(m, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int[::1] counts = np.zeros(max(p, 1), dtype=np.intc)
    cdef const int* cptr = &coords[0]
    if m == 0:
        return out
    with nogil:
        for i in range(m):
            o[i] = _descend(&codes[i, 0], cptr, depth, &counts[0], p)
    return out


def forest_leaf_mean(const double[:, ::1] U_train, const double[:, ::1] Z,
                     const double[:, ::1] U_test, const int[:, ::1] coords, int depth):
    """Average over trees of the leaf mean of Z at each test point.

    Empty leaves contribute 0. Tree contributions are accumulated in tree
    order with Neumaier compensation.
    """
    cdef Py_ssize_t n = U_train.shape[0], m = U_test.shape[0], q = Z.shape[1]
    cdef Py_ssize_t B = coords.shape[0], n_leaves = (<Py_ssize_t> 1) << depth
    cdef int p = U_train.shape[1]
    cdef Py_ssize_t b, i, k, leaf
    cdef double x, t, cnt
    tot_arr = np.zeros((m, q), dtype=np.float64)
    if m == 0:
        return tot_arr
    tr_arr = dyadic_codes(U_train, depth)
    te_arr = dyadic_codes(U_test, depth)
    cdef const int64_t[:, ::1] tr = tr_arr
    cdef const int64_t[:, ::1] te = te_arr
    sums_arr = np.zeros((n_leaves, q), dtype=np.float64)
    cnt_arr = np.zeros(n_leaves, dtype=np.float64)
    comp_arr = np.zeros((m, q), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    cdef double[::1] counts_leaf = cnt_arr
    cdef double[:, ::1] tot = tot_arr
    cdef double[:, ::1] comp = comp_arr
    cdef int[::1] counts = np.zeros(max(p, 1), dtype=np.intc)
    cdef const int* crow
    with nogil:
        for b in range(B):
            crow = &coords[b, 0]
            for leaf in range(n_leaves):
                counts_leaf[leaf] = 0.0
                for k in range(q):
                    sums[leaf, k] = 0.0
            for i in range(n):
                leaf = _descend(&tr[i, 0], crow, depth, &counts[0], p)
                counts_leaf[leaf] += 1.0
                for k in range(q):
                    sums[leaf, k] += Z[i, k]
            for i in range(m):
                leaf = _descend(&te[i, 0], crow, depth, &counts[0], p)
                cnt = counts_leaf[leaf]
                for k in range(q):
                    x = sums[leaf, k] / cnt if cnt > 0 else 0.0
                    t = tot[i, k] + x
                    if fabs(tot[i, k]) >= fabs(x):
                        comp[i, k] += (tot[i, k] - t) + x
                    else:
                        comp[i, k] += (x - t) + tot[i, k]
                    tot[i, k] = t
        for i in range(m):
            for k in range(q):
                tot[i, k] = (tot[i, k] + comp[i, k]) / B
    return tot_arr
