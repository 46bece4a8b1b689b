"""Pure-Python kernels: used when the compiled extension is unavailable.

Both functions mirror `_speedups.pyx` operation for operation so that the two
paths produce bit-identical doubles on the same inputs.
"""

from __future__ import annotations


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two sequences.

    Classic O(len(a)*len(b)) dynamic program, two rolling rows.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:
        a, b = b, a
        n, m = m, n
    prev = [0] * (m + 1)
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                pj = prev[j]
                cj = cur[j - 1]
                cur[j] = pj if pj >= cj else cj
        prev, cur = cur, prev
    return prev[m]


def bm25_accumulate(scores, doc_idx, tfs, idf, k1, b, doc_len, avgdl) -> None:
    """Add one query term's BM25 contribution to the score accumulator.

    scores: per-document accumulator (indexed by internal doc position).
    doc_idx / tfs: the term's postings (positions and term frequencies).
    Expression order matches the compiled kernel exactly.
    """
    one_minus_b = 1.0 - b
    k1_plus_1 = k1 + 1.0
    for i in range(len(doc_idx)):
        d = doc_idx[i]
        tf = float(tfs[i])
        denom = tf + k1 * (one_minus_b + b * doc_len[d] / avgdl)
        scores[d] += idf * (tf * k1_plus_1) / denom
