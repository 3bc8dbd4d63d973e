"""Count-based n-gram language models, Jelinek-Mercer scoring and BM25."""

from __future__ import annotations

import math
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError


def safe_log(x: float) -> float:
    return math.log(x) if x > 0.0 else -math.inf


@dataclass(frozen=True)
class CountLM:
    """Maximum-likelihood n-gram tables: ``counts[ctx][t] / totals[ctx]``."""

    n: int
    counts: Mapping[tuple[int, ...], Mapping[int, int]]
    totals: Mapping[tuple[int, ...], int]

    def prob(self, term: int, context: Sequence[int] = ()) -> float:
        ctx = tuple(context[len(context) - (self.n - 1):]) if self.n > 1 else ()
        total = self.totals.get(ctx, 0)
        if total == 0:
            return 0.0
        return self.counts[ctx].get(term, 0) / total


def _ngram_counts(term_ids: Sequence[int], n: int, into: dict) -> None:
    for i in range(n - 1, len(term_ids)):
        ctx = tuple(term_ids[i - n + 1:i])
        into[ctx][term_ids[i]] += 1


def _freeze(table: dict, n: int) -> CountLM:
    counts = {ctx: dict(c) for ctx, c in table.items()}
    totals = {ctx: sum(c.values()) for ctx, c in counts.items()}
    return CountLM(n, counts, totals)


def estimate_count_lm(term_ids: Sequence[int], n: int = 1) -> CountLM:
    """Closed-form ML estimate; for ``n=1`` the denominator is the length."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    table: dict = defaultdict(Counter)
    _ngram_counts(term_ids, n, table)
    return _freeze(table, n)


def estimate_collection_lm(docs: Iterable[Sequence[int]], n: int = 1) -> CountLM:
    """Counts summed over documents; n-grams never cross a document boundary."""
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    table: dict = defaultdict(Counter)
    for ids in docs:
        _ngram_counts(ids, n, table)
    return _freeze(table, n)


def jm_log_prob(query_ids: Sequence[int], doc_lm: CountLM, coll_lm: CountLM, lam: float) -> float:
    """Natural-log query likelihood under Jelinek-Mercer smoothing.

    For order ``n > 1`` only query positions with a full context are scored.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if doc_lm.n != coll_lm.n:
        raise ValueError("document and collection models differ in order")
    n = doc_lm.n
    score = 0.0
    for i in range(n - 1, len(query_ids)):
        ctx = query_ids[i - n + 1:i]
        t = query_ids[i]
        p = (1.0 - lam) * doc_lm.prob(t, ctx) + lam * coll_lm.prob(t, ctx)
        score += safe_log(p)
    return score


# --- inverted index -------------------------------------------------------


@dataclass
class InvertedIndex:
    """Postings per term, each a ``doc_id -> tf`` dict in ascending doc_id order."""

    terms: dict[str, int]
    postings: dict[int, dict[str, int]]
    doc_lengths: dict[str, int]
    _doc_tf: Optional[dict[str, dict[int, int]]] = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_lengths.values()) / self.N if self.N else 0.0

    @property
    def total_tokens(self) -> int:
        return sum(self.doc_lengths.values())

    def df(self, term_id: int) -> int:
        return len(self.postings.get(term_id, ()))

    def tf(self, term_id: int, doc_id: str) -> int:
        return self.postings.get(term_id, {}).get(doc_id, 0)

    def encode_query(self, tokens: Sequence[str]) -> list[int]:
        return [self.terms[t] for t in tokens if t in self.terms]

    def doc_term_counts(self, doc_id: str) -> dict[int, int]:
        if self._doc_tf is None:
            fwd: dict[str, dict[int, int]] = {d: {} for d in self.doc_lengths}
            for t, plist in self.postings.items():
                for d, tf in plist.items():
                    fwd[d][t] = tf
            self._doc_tf = fwd
        if doc_id not in self._doc_tf:
            raise KeyError(f"unknown doc_id {doc_id!r}")
        return self._doc_tf[doc_id]

    def doc_lm(self, doc_id: str) -> CountLM:
        counts = self.doc_term_counts(doc_id)
        return CountLM(1, {(): counts}, {(): self.doc_lengths[doc_id]})

    def collection_lm(self) -> CountLM:
        counts = {t: sum(p.values()) for t, p in self.postings.items()}
        return CountLM(1, {(): counts}, {(): self.total_tokens})


def build_index(docs: Iterable) -> InvertedIndex:
    """Index every stem of every document (no frequency cutoff).

    ``docs`` yields ``Document`` objects (or ``(doc_id, tokens)`` pairs).
    """
    by_doc: dict[str, Counter] = {}
    for d in docs:
        doc_id, tokens = (d.doc_id, d.tokens) if hasattr(d, "doc_id") else d
        if doc_id in by_doc:
            raise DataError(f"duplicate doc_id {doc_id!r}")
        by_doc[doc_id] = Counter(tokens)
    # term ids follow first appearance in doc_id order, so the index does
    # not depend on input order
    terms: dict[str, int] = {}
    for doc_id in sorted(by_doc):
        for tok in sorted(by_doc[doc_id]):
            terms.setdefault(tok, len(terms))
    postings: dict[int, dict[str, int]] = {}
    for doc_id in sorted(by_doc):
        for tok, tf in sorted(by_doc[doc_id].items()):
            postings.setdefault(terms[tok], {})[doc_id] = tf
    lengths = {doc_id: sum(by_doc[doc_id].values()) for doc_id in sorted(by_doc)}
    return InvertedIndex(terms, postings, lengths)


def bm25_idf(N: int, df: int) -> float:
    return math.log(1.0 + (N - df + 0.5) / (df + 0.5))


def bm25_score(query_ids: Sequence[int], doc_id: str, index: InvertedIndex,
               k1: float = 1.2, b: float = 0.5) -> float:
    if doc_id not in index.doc_lengths:
        raise KeyError(f"unknown doc_id {doc_id!r}")
    dl = index.doc_lengths[doc_id]
    norm = k1 * (1.0 - b + b * dl / index.avgdl)
    score = 0.0
    for t in query_ids:
        tf = index.tf(t, doc_id)
        if tf == 0:
            continue
        score += bm25_idf(index.N, index.df(t)) * tf * (k1 + 1.0) / (tf + norm)
    return score


def retrieve_topk(query_ids: Sequence[int], index: InvertedIndex, k: int = 100,
                  k1: float = 1.2, b: float = 0.5) -> list[tuple[str, float]]:
    """Term-at-a-time BM25; documents matching no query term are omitted."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    avgdl = index.avgdl
    acc: dict[str, float] = defaultdict(float)
    for t in query_ids:
        plist = index.postings.get(t)
        if not plist:
            continue
        idf = bm25_idf(index.N, len(plist))
        for doc_id, tf in plist.items():
            norm = k1 * (1.0 - b + b * index.doc_lengths[doc_id] / avgdl)
            acc[doc_id] += idf * tf * (k1 + 1.0) / (tf + norm)
    ranked = sorted(((d, s) for d, s in acc.items() if s > 0.0), key=lambda ds: (-ds[1], ds[0]))
    return ranked[:k]


# --- index file -----------------------------------------------------------
#
# little-endian layout:
#   magic  b"NNIRIDX\0"  | u32 version
#   u32 n_terms, then per term:  u32 byte length, utf-8 stem   (id = position)
#   u32 n_docs,  then per doc:   u32 byte length, utf-8 doc_id, u32 length
#   per term id in order: u32 n_postings, then n_postings x (u32 doc index, u32 tf)

INDEX_MAGIC = b"NNIRIDX\0"
INDEX_VERSION = 1


def _write_str(f, s: str) -> None:
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_exact(f, n: int) -> bytes:
    raw = f.read(n)
    if len(raw) != n:
        raise DataError("truncated file")
    return raw


def _read_u32(f) -> int:
    return struct.unpack("<I", _read_exact(f, 4))[0]


def _read_str(f) -> str:
    return _read_exact(f, _read_u32(f)).decode("utf-8")


def write_index(index: InvertedIndex, f) -> None:
    f.write(INDEX_MAGIC)
    f.write(struct.pack("<I", INDEX_VERSION))
    by_id = sorted(index.terms.items(), key=lambda kv: kv[1])
    f.write(struct.pack("<I", len(by_id)))
    for term, _ in by_id:
        _write_str(f, term)
    doc_ids = list(index.doc_lengths)
    doc_pos = {d: i for i, d in enumerate(doc_ids)}
    f.write(struct.pack("<I", len(doc_ids)))
    for d in doc_ids:
        _write_str(f, d)
        f.write(struct.pack("<I", index.doc_lengths[d]))
    for _, tid in by_id:
        plist = index.postings.get(tid, {})
        f.write(struct.pack("<I", len(plist)))
        arr = np.array([(doc_pos[d], tf) for d, tf in plist.items()], dtype="<u4").reshape(-1, 2)
        f.write(arr.tobytes())


def read_index(path: str | Path) -> InvertedIndex:
    with open(path, "rb") as f:
        if f.read(len(INDEX_MAGIC)) != INDEX_MAGIC:
            raise DataError(f"{path}: not an index file")
        version = _read_u32(f)
        if version != INDEX_VERSION:
            raise DataError(f"{path}: unsupported index version {version}")
        terms = {_read_str(f): i for i in range(_read_u32(f))}
        doc_ids, lengths = [], {}
        for _ in range(_read_u32(f)):
            d = _read_str(f)
            doc_ids.append(d)
            lengths[d] = _read_u32(f)
        postings = {}
        for tid in range(len(terms)):
            n = _read_u32(f)
            arr = np.frombuffer(_read_exact(f, 8 * n), dtype="<u4").reshape(n, 2)
            postings[tid] = {doc_ids[int(i)]: int(tf) for i, tf in arr}
    return InvertedIndex(terms, postings, lengths)
