# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_kernels_py``; must stay bit-compatible with it."""

from libc.stdlib cimport malloc, free

import numpy as np


cdef inline void _partial_shuffle(long *perm, long n, const double *u, long k) noexcept nogil:
    cdef long i, j, span, tmp
    for i in range(n):
        perm[i] = i
    for i in range(k):
        span = n - i
        j = <long>(u[i] * span)
        if j > span - 1:
            j = span - 1
        j += i
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


def subset_rows(const double[:, ::1] u, long n):
    cdef long b = u.shape[0], k = u.shape[1], r, i
    out = np.empty((b, k), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef long *perm = <long *>malloc(max(n, 1) * sizeof(long))
    if perm == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(b):
                _partial_shuffle(perm, n, &u[r, 0] if k > 0 else NULL, k)
                for i in range(k):
                    o[r, i] = perm[i]
    finally:
        free(perm)
    return out


def count_survivals(long n_lps, long n_entities, long m, long n_failed, bint constrained,
                    long need, const double[:, ::1] u_place, const double[:, ::1] u_crash):
    cdef long trials = u_place.shape[0]
    cdef long t, e, r, lp, alive, ok = 0
    cdef bint good
    cdef long *perm = <long *>malloc(max(n_lps, 1) * sizeof(long))
    cdef char *crashed = <char *>malloc(max(n_lps, 1) * sizeof(char))
    cdef const double *row
    if perm == NULL or crashed == NULL:
        free(perm)
        free(crashed)
        raise MemoryError()
    try:
        with nogil:
            for t in range(trials):
                for lp in range(n_lps):
                    crashed[lp] = 0
                if n_failed > 0:
                    _partial_shuffle(perm, n_lps, &u_crash[t, 0], n_failed)
                    for r in range(n_failed):
                        crashed[perm[r]] = 1
                good = True
                row = &u_place[t, 0]
                for e in range(n_entities):
                    alive = 0
                    if constrained:
                        _partial_shuffle(perm, n_lps, row + e * m, m)
                        for r in range(m):
                            if not crashed[perm[r]]:
                                alive += 1
                    else:
                        for r in range(m):
                            lp = <long>(row[e * m + r] * n_lps)
                            if lp > n_lps - 1:
                                lp = n_lps - 1
                            if not crashed[lp]:
                                alive += 1
                    if alive < need:
                        good = False
                        break
                if good:
                    ok += 1
    finally:
        free(perm)
        free(crashed)
    return ok
