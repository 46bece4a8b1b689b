from __future__ import annotations

import math
from pathlib import Path

import pytest

from specforge.backend import TokenDistribution, _finalize_entries

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


class QueueDistBackend:
    """Stub backend serving a fixed queue of distributions in call order.

    Each queue item is a dict token_text -> probability; token ids are
    assigned from the sorted union of all tokens in the queue.
    """

    def __init__(self, dists: list[dict[str, float]]):
        vocab = sorted({tok for d in dists for tok in d})
        self._ids = {tok: i for i, tok in enumerate(vocab)}
        self.queue = list(dists)
        self.calls = 0

    def supports_distributions(self) -> bool:
        return True

    def next_token_distribution(self, prefix: str, step_index: int = 0) -> TokenDistribution:
        dist_map = self.queue[self.calls % len(self.queue)]
        self.calls += 1
        entries = [(self._ids[t], t, float(p)) for t, p in sorted(dist_map.items())]
        dist = TokenDistribution(step_index=step_index, entries=_finalize_entries(entries))
        dist.validate()
        return dist


# --- independent oracles (kept deliberately naive) ---------------------


def oracle_bm25_scores(doc_tokens: list[list[str]], query_tokens: list[str], k1: float, b: float) -> list[float]:
    """Full-scan BM25: per-document loop straight off the formula."""
    n = len(doc_tokens)
    avgdl = sum(len(d) for d in doc_tokens) / n
    df: dict[str, int] = {}
    for toks in doc_tokens:
        for t in set(toks):
            df[t] = df.get(t, 0) + 1
    scores = []
    for toks in doc_tokens:
        dl = len(toks)
        s = 0.0
        for q in query_tokens:
            if q not in df:
                continue
            tf = float(toks.count(q))
            if tf == 0.0:
                # zero-tf contributions are zero but keep op order identical
                continue
            idf = math.log((n - df[q] + 0.5) / (df[q] + 0.5))
            if idf < 0.0:
                idf = 0.0
            denom = tf + k1 * (1.0 - b + b * dl / avgdl)
            s += idf * (tf * (k1 + 1.0)) / denom
        scores.append(s)
    return scores


def oracle_top_k(doc_ids, doc_tokens, query_tokens, k, k1, b):
    """Rank documents overlapping the query by (score desc, doc_id asc)."""
    scores = oracle_bm25_scores(doc_tokens, query_tokens, k1, b)
    qset = set(query_tokens)
    cands = [
        (doc_ids[i], scores[i])
        for i in range(len(doc_ids))
        if qset & set(doc_tokens[i])
    ]
    cands.sort(key=lambda pair: (-pair[1], pair[0]))
    top = cands[:k]
    total = sum(s for _, s in top)
    if total > 0:
        weights = [s / total for _, s in top]
    else:
        weights = [1.0 / len(top)] * len(top) if top else []
    return [(d, s, w) for (d, s), w in zip(top, weights)]


def oracle_lcs(a: list, b: list) -> int:
    """Full-matrix O(n*m) LCS, no rolling rows."""
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[n][m]
