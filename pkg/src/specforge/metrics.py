"""Text-overlap metrics: bag-of-tokens F1 and ROUGE-L.

Normalization is pinned because it moves scores:
  * token_f1: lowercase, punctuation -> space, drop articles (a/an/the),
    collapse whitespace — the common QA convention.
  * rouge_l: same pipeline WITHOUT article removal, matching the ROUGE
    definition (articles are ordinary tokens there).

Both return the max over the provided references. Empty-vs-empty scores 1.0,
empty-vs-nonempty scores 0.0.
"""

from __future__ import annotations

import re
from collections import Counter

from . import _kernels

_PUNCT_RE = re.compile(r"[^\w\s]|_")
_ARTICLES = {"a", "an", "the"}


def qa_tokens(text: str) -> list[str]:
    """QA-normalized tokens: lowercase, punctuation stripped, articles removed."""
    cleaned = _PUNCT_RE.sub(" ", text.lower())
    return [t for t in cleaned.split() if t not in _ARTICLES]


def rouge_tokens(text: str) -> list[str]:
    """ROUGE-normalized tokens: lowercase, punctuation stripped, articles kept."""
    return _PUNCT_RE.sub(" ", text.lower()).split()


def _f1_counts(pred: list[str], gold: list[str]) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    overlap = sum((Counter(pred) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: list[str]) -> float:
    """Bag-of-tokens F1 against each gold; best gold wins."""
    if not golds:
        raise ValueError("golds must be nonempty")
    pred = qa_tokens(prediction)
    return max(_f1_counts(pred, qa_tokens(g)) for g in golds)


class _Interner:
    """Token -> small int mapping so the LCS kernel can run on int arrays."""

    def __init__(self):
        self._ids: dict[str, int] = {}

    def encode(self, tokens: list[str]) -> list[int]:
        ids = self._ids
        out = []
        for t in tokens:
            i = ids.get(t)
            if i is None:
                i = len(ids)
                ids[t] = i
            out.append(i)
        return out


def _lcs_f_measure(pred_ids: list[int], gold_ids: list[int]) -> float:
    if not pred_ids and not gold_ids:
        return 1.0
    if not pred_ids or not gold_ids:
        return 0.0
    lcs = _kernels.lcs_length(pred_ids, gold_ids)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_ids)
    recall = lcs / len(gold_ids)
    return 2 * precision * recall / (precision + recall)


def rouge_l(prediction: str, golds: list[str]) -> float:
    """Token-level LCS F-measure (beta=1) against each gold; best gold wins."""
    if not golds:
        raise ValueError("golds must be nonempty")
    interner = _Interner()
    pred_ids = interner.encode(rouge_tokens(prediction))
    return max(_lcs_f_measure(pred_ids, interner.encode(rouge_tokens(g))) for g in golds)


def rouge_l_pair(a: str, b: str) -> float:
    """ROUGE-L F between two strings (dedup-filter convenience)."""
    return rouge_l(a, [b])


class RougeSet:
    """Incrementally built reference set answering "max ROUGE-L F against
    anything already in the set" — the dedup filter's hot path.

    Tokens are interned once per set so repeated scoring goes straight to
    the LCS kernel.
    """

    def __init__(self):
        self._interner = _Interner()
        self._members: list[list[int]] = []

    def __len__(self) -> int:
        return len(self._members)

    def encode(self, text: str) -> list[int]:
        return self._interner.encode(rouge_tokens(text))

    def add(self, text: str) -> None:
        self._members.append(self.encode(text))

    def max_score(self, text: str) -> float:
        if not self._members:
            return 0.0
        ids = self.encode(text)
        return max(_lcs_f_measure(ids, other) for other in self._members)
