"""BM25 inverted index over an unlabeled domain corpus.

Okapi BM25 with k1=1.2, b=0.75 defaults, +0.5-smoothed IDF floored at 0.
Retrieval weights are normalized relevance scores (proportional by default,
softmax optional) used downstream as the per-document mixture weights.

Build is sharded: token counting runs in bounded-memory shards that are
merged and canonicalized (documents reordered by doc_id) so the finished
index is identical for any permutation of the input.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .errors import IndexError_, IndexFormatError

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_TOP_K = 5
DEFAULT_QUERY_TERM_BUDGET = 512

_MAGIC = b"SFIX"
_VERSION = 1

# word characters minus underscore: lowercased Unicode-aware word splitting
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on Unicode whitespace/punctuation."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: int
    text: str


@dataclass(frozen=True)
class RetrievedDoc:
    doc_id: int
    text: str
    raw_score: float
    weight: float


class InvertedIndex:
    """Immutable after build; safe for concurrent queries."""

    def __init__(
        self,
        doc_ids: np.ndarray,
        texts: list[str],
        doc_len: np.ndarray,
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ):
        self.doc_ids = doc_ids            # int64, sorted ascending
        self.texts = texts
        self.doc_len = doc_len            # float64 token counts
        self.postings = postings          # term -> (int32 positions, int32 tfs)
        self.k1 = float(k1)
        self.b = float(b)
        self.n_docs = len(texts)
        self.avgdl = float(doc_len.sum() / self.n_docs) if self.n_docs else 0.0

    def idf(self, term: str) -> float:
        """Okapi IDF with +0.5 smoothing, floored at 0."""
        entry = self.postings.get(term)
        if entry is None:
            return 0.0
        df = len(entry[0])
        raw = math.log((self.n_docs - df + 0.5) / (df + 0.5))
        return raw if raw > 0.0 else 0.0


def _iter_shards(docs: Iterable[Document], shard_size: int) -> Iterator[list[Document]]:
    shard: list[Document] = []
    for doc in docs:
        shard.append(doc)
        if len(shard) >= shard_size:
            yield shard
            shard = []
    if shard:
        yield shard


def build_index(
    docs: Iterable[Document],
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    shard_size: int = 50_000,
) -> InvertedIndex:
    """Build an index from a document stream.

    Raises on duplicate doc_ids and on an empty stream. The result does not
    depend on input order.
    """
    ids: list[int] = []
    texts: list[str] = []
    lens: list[int] = []
    # term -> ([input positions], [tfs]); merged across shards
    merged: dict[str, tuple[list[int], list[int]]] = {}

    pos = 0
    for shard in _iter_shards(docs, shard_size):
        shard_counts: dict[str, list[tuple[int, int]]] = {}
        for doc in shard:
            if not doc.text.strip():
                raise IndexError_(f"document {doc.doc_id} has empty text")
            toks = tokenize(doc.text)
            counts: dict[str, int] = {}
            for t in toks:
                counts[t] = counts.get(t, 0) + 1
            for term, tf in counts.items():
                shard_counts.setdefault(term, []).append((pos, tf))
            ids.append(int(doc.doc_id))
            texts.append(doc.text)
            lens.append(len(toks))
            pos += 1
        for term, pairs in shard_counts.items():
            slot = merged.setdefault(term, ([], []))
            for p, tf in pairs:
                slot[0].append(p)
                slot[1].append(tf)

    if not ids:
        raise IndexError_("cannot build an index from zero documents")

    id_arr = np.asarray(ids, dtype=np.int64)
    uniq, counts = np.unique(id_arr, return_counts=True)
    if len(uniq) != len(id_arr):
        dup = uniq[counts > 1].tolist()
        raise IndexError_(f"duplicate doc_id(s): {dup}")

    # canonical order: ascending doc_id, independent of input permutation
    order = np.argsort(id_arr, kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))

    sorted_ids = id_arr[order]
    sorted_texts = [texts[i] for i in order]
    sorted_len = np.asarray(lens, dtype=np.float64)[order]

    postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for term, (positions, tfs) in merged.items():
        new_pos = rank[np.asarray(positions, dtype=np.int64)]
        tf_arr = np.asarray(tfs, dtype=np.int32)
        sort = np.argsort(new_pos, kind="stable")
        postings[term] = (new_pos[sort].astype(np.int32), tf_arr[sort])

    return InvertedIndex(sorted_ids, sorted_texts, sorted_len, postings, k1=k1, b=b)


def _normalize_weights(raw: np.ndarray, scheme: str, softmax_temperature: float) -> np.ndarray:
    if scheme == "softmax":
        z = raw / softmax_temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()
    total = float(raw.sum())
    if total > 0.0:
        return raw / total
    # every matching term had zero IDF: fall back to uniform
    return np.full(len(raw), 1.0 / len(raw))


def query_top_k(
    index: InvertedIndex,
    query: str,
    k: int = DEFAULT_TOP_K,
    weight_scheme: str = "proportional",
    softmax_temperature: float = 1.0,
    term_budget: int = DEFAULT_QUERY_TERM_BUDGET,
) -> list[RetrievedDoc]:
    """Top-k documents by BM25, ties broken by ascending doc_id.

    Documents sharing no term with the query are excluded; an empty query
    (after tokenization) returns an empty result. Weights over the returned
    set sum to 1.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if weight_scheme not in ("proportional", "softmax"):
        raise ValueError(f"unknown weight scheme: {weight_scheme}")
    terms = tokenize(query)[:term_budget]
    if not terms:
        return []

    scores = np.zeros(index.n_docs, dtype=np.float64)
    touched: list[np.ndarray] = []
    for term in terms:
        entry = index.postings.get(term)
        if entry is None:
            continue
        positions, tfs = entry
        _kernels.bm25_accumulate(
            scores, positions, tfs, index.idf(term), index.k1, index.b, index.doc_len, index.avgdl
        )
        touched.append(positions)
    if not touched:
        return []

    cand = np.unique(np.concatenate(touched))
    cand_scores = scores[cand]
    cand_ids = index.doc_ids[cand]
    order = np.lexsort((cand_ids, -cand_scores))[:k]
    top = cand[order]
    raw = scores[top]
    weights = _normalize_weights(raw, weight_scheme, softmax_temperature)
    return [
        RetrievedDoc(
            doc_id=int(index.doc_ids[i]),
            text=index.texts[i],
            raw_score=float(raw[j]),
            weight=float(weights[j]),
        )
        for j, i in enumerate(top)
    ]


def read_corpus(path: str | Path) -> Iterator[Document]:
    """Read a corpus file: JSON-lines ({"doc_id", "text"}) or plain text
    (one document per line, ids assigned from 0 in line order)."""
    path = Path(path)
    if not path.exists():
        raise IndexError_(f"corpus file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise IndexError_(f"corpus file is empty: {path}")
        jsonl = False
        try:
            obj = json.loads(first)
            jsonl = isinstance(obj, dict) and "text" in obj
        except json.JSONDecodeError:
            jsonl = False
        fh.seek(0)
        if jsonl:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IndexError_(f"corpus line {lineno}: invalid JSON ({exc.msg})") from None
                if "doc_id" not in obj or "text" not in obj:
                    raise IndexError_(f"corpus line {lineno}: need doc_id and text fields")
                yield Document(doc_id=int(obj["doc_id"]), text=str(obj["text"]))
        else:
            doc_id = 0
            for line in fh:
                if not line.strip():
                    continue
                yield Document(doc_id=doc_id, text=line.rstrip("\n"))
                doc_id += 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IndexFormatError("index file truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Write the versioned binary format with a trailing SHA-256 checksum."""
    parts: list[bytes] = [_MAGIC, struct.pack("<I", _VERSION)]
    parts.append(struct.pack("<ddQd", index.k1, index.b, index.n_docs, index.avgdl))
    for i in range(index.n_docs):
        parts.append(struct.pack("<qI", int(index.doc_ids[i]), int(index.doc_len[i])))
        parts.append(_pack_str(index.texts[i]))
    terms = sorted(index.postings)
    parts.append(struct.pack("<Q", len(terms)))
    for term in terms:
        positions, tfs = index.postings[term]
        parts.append(_pack_str(term))
        parts.append(struct.pack("<Q", len(positions)))
        parts.append(positions.astype("<i4").tobytes())
        parts.append(tfs.astype("<i4").tobytes())
    payload = b"".join(parts)
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)


def load_index(path: str | Path) -> InvertedIndex:
    """Read an index file; verifies magic, version, and checksum."""
    path = Path(path)
    if not path.exists():
        raise IndexFormatError(f"index file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 4 + 4 + 32:
        raise IndexFormatError(f"index file too small to be valid: {path}")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise IndexFormatError(f"index file checksum mismatch (corrupt or truncated): {path}")
    rd = _Reader(payload)
    if rd.take(4) != _MAGIC:
        raise IndexFormatError(f"not a specforge index file: {path}")
    (version,) = rd.unpack("<I")
    if version != _VERSION:
        raise IndexFormatError(f"unsupported index version {version} (expected {_VERSION})")
    k1, b, n_docs, avgdl = rd.unpack("<ddQd")
    doc_ids = np.empty(n_docs, dtype=np.int64)
    doc_len = np.empty(n_docs, dtype=np.float64)
    texts: list[str] = []
    for i in range(n_docs):
        doc_id, length = rd.unpack("<qI")
        doc_ids[i] = doc_id
        doc_len[i] = float(length)
        texts.append(rd.string())
    (n_terms,) = rd.unpack("<Q")
    postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for _ in range(n_terms):
        term = rd.string()
        (df,) = rd.unpack("<Q")
        positions = np.frombuffer(rd.take(4 * df), dtype="<i4").astype(np.int32)
        tfs = np.frombuffer(rd.take(4 * df), dtype="<i4").astype(np.int32)
        postings[term] = (positions, tfs)
    index = InvertedIndex(doc_ids, texts, doc_len, postings, k1=k1, b=b)
    if n_docs and abs(index.avgdl - avgdl) > 1e-9 * max(1.0, abs(avgdl)):
        raise IndexFormatError(f"stored avgdl {avgdl} disagrees with length table: {path}")
    return index
