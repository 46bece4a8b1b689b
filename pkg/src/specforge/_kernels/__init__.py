"""Hot-loop kernels with import-time backend selection.

The compiled Cython extension is preferred when importable; the pure-Python
fallback is always available. Set SPECFORGE_PURE=1 to force the fallback
(useful for benchmarking and debugging).
"""

from __future__ import annotations

import os

import numpy as np

from . import pure

if os.environ.get("SPECFORGE_PURE") == "1":
    _ext = None
else:
    try:
        from . import _speedups as _ext
    except ImportError:
        _ext = None

HAVE_SPEEDUPS = _ext is not None


def backend_name() -> str:
    return "compiled" if HAVE_SPEEDUPS else "pure"


def lcs_length(a, b) -> int:
    """LCS length of two sequences of ints (interned token ids)."""
    if HAVE_SPEEDUPS:
        return _ext.lcs_length(
            np.ascontiguousarray(a, dtype=np.int32),
            np.ascontiguousarray(b, dtype=np.int32),
        )
    return pure.lcs_length(a, b)


def bm25_accumulate(scores, doc_idx, tfs, idf, k1, b, doc_len, avgdl) -> None:
    """In-place BM25 score accumulation for one query term occurrence.

    `scores` and `doc_len` are float64 arrays indexed by internal doc
    position; `doc_idx`/`tfs` are the term's int32 postings arrays.
    """
    impl = _ext if HAVE_SPEEDUPS else pure
    impl.bm25_accumulate(scores, doc_idx, tfs, float(idf), float(k1), float(b), doc_len, float(avgdl))
