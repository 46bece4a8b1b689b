# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: LCS length and BM25 postings accumulation.

Kept semantically identical to `pure.py`; do not enable -ffast-math, the
retrieval oracle tests rely on IEEE double behaviour.
"""

from libc.stdlib cimport free, malloc


def lcs_length(int[::1] a, int[::1] b):
    """Length of the longest common subsequence of two int sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef int[::1] x = a
    cdef int[::1] y = b
    cdef Py_ssize_t tmp
    if m > n:
        x, y = b, a
        tmp = n
        n = m
        m = tmp
    cdef int *prev = <int *> malloc((m + 1) * sizeof(int))
    cdef int *cur = <int *> malloc((m + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        if prev != NULL:
            free(prev)
        if cur != NULL:
            free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int ai, pj, cj, out
    cdef int *swap
    try:
        for j in range(m + 1):
            prev[j] = 0
            cur[j] = 0
        for i in range(1, n + 1):
            ai = x[i - 1]
            for j in range(1, m + 1):
                if ai == y[j - 1]:
                    cur[j] = prev[j - 1] + 1
                else:
                    pj = prev[j]
                    cj = cur[j - 1]
                    cur[j] = pj if pj >= cj else cj
            swap = prev
            prev = cur
            cur = swap
        out = prev[m]
    finally:
        free(prev)
        free(cur)
    return out


def bm25_accumulate(double[::1] scores, int[::1] doc_idx, int[::1] tfs,
                    double idf, double k1, double b,
                    double[::1] doc_len, double avgdl):
    """Add one query term's BM25 contribution to the score accumulator."""
    cdef double one_minus_b = 1.0 - b
    cdef double k1_plus_1 = k1 + 1.0
    cdef Py_ssize_t i
    cdef Py_ssize_t d
    cdef double tf, denom
    for i in range(doc_idx.shape[0]):
        d = doc_idx[i]
        tf = <double> tfs[i]
        denom = tf + k1 * (one_minus_b + b * doc_len[d] / avgdl)
        scores[d] += idf * (tf * k1_plus_1) / denom
