"""Tokenization, vocabularies and document readers.

Text is lowercased, split on runs of non-alphanumeric characters and each
token is reduced with the original Porter (1980) stemmer.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import DataError

PADDING_TOKEN = "<pad>"

_SPLIT_RE = re.compile(r"[^\W_]+", re.UNICODE)


@lru_cache(maxsize=1)
def _stemmer():
    # importing nltk takes over a second; only pay for it when stemming
    from nltk.stem.porter import PorterStemmer

    return PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=500_000)
def stem(word: str) -> str:
    # a lone "s" would otherwise stem to the empty string
    return _stemmer().stem(word, to_lowercase=False) or word


def split_words(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs, without stemming."""
    return _SPLIT_RE.findall(text.lower())


def tokenize(text: str, stopwords: Optional[frozenset[str]] = None) -> list[str]:
    words = split_words(text)
    if stopwords:
        words = [w for w in words if w not in stopwords]
    return [stem(w) for w in words]


def load_stopwords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as f:
        return frozenset(w for line in f for w in split_words(line))


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[str, ...] = ()
    term_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class Vocabulary:
    """Stem -> id map. Word ids are dense in ``[0, size)``; the padding
    token takes id ``size`` and has no frequency (it is not a Huffman leaf).
    """

    words: tuple[str, ...]
    frequencies: tuple[int, ...]
    min_count: int = 1
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.words) != len(self.frequencies):
            raise ValueError("words and frequencies differ in length")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @property
    def size(self) -> int:
        """Number of real words (Huffman leaves)."""
        return len(self.words)

    @property
    def padding_id(self) -> int:
        return len(self.words)

    @property
    def n_rows(self) -> int:
        """Embedding rows, padding included."""
        return len(self.words) + 1

    @property
    def total_count(self) -> int:
        return sum(self.frequencies)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def get(self, word: str) -> Optional[int]:
        return self._index.get(word)

    def __getitem__(self, word: str) -> int:
        return self._index[word]

    def frequency(self, term_id: int) -> int:
        return self.frequencies[term_id]


def count_stems(docs: Iterable[Document | Sequence[str]]) -> Counter:
    counts: Counter = Counter()
    for doc in docs:
        counts.update(doc.tokens if isinstance(doc, Document) else doc)
    return counts


def vocabulary_from_counts(counts: Mapping[str, int], min_count: int) -> Vocabulary:
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    if not counts or sum(counts.values()) == 0:
        raise DataError("empty corpus")
    kept = sorted(
        ((w, c) for w, c in counts.items() if c >= min_count),
        key=lambda wc: (-wc[1], wc[0]),
    )
    return Vocabulary(
        words=tuple(w for w, _ in kept),
        frequencies=tuple(c for _, c in kept),
        min_count=min_count,
    )


def build_vocabulary(docs: Iterable[Document | Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    return vocabulary_from_counts(count_stems(docs), min_count)


def encode(doc: Document | Sequence[str], vocab: Vocabulary) -> list[int]:
    tokens = doc.tokens if isinstance(doc, Document) else doc
    ids = []
    for tok in tokens:
        i = vocab.get(tok)
        if i is not None:
            ids.append(i)
    return ids


def encode_documents(docs: Iterable[Document], vocab: Vocabulary) -> list[Document]:
    return [Document(d.doc_id, d.tokens, tuple(encode(d, vocab))) for d in docs]


# --- vocabulary file: ``stem<TAB>id<TAB>frequency`` sorted by id ----------


def write_vocabulary(vocab: Vocabulary, f) -> None:
    f.write(f"# min_count {vocab.min_count}\n")
    for i, (w, c) in enumerate(zip(vocab.words, vocab.frequencies)):
        f.write(f"{w}\t{i}\t{c}\n")
    f.write(f"{PADDING_TOKEN}\t{vocab.padding_id}\t0\n")


def read_vocabulary(path: str | Path) -> Vocabulary:
    words, freqs = [], []
    min_count = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "min_count":
                    min_count = int(parts[1])
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            w, i, c = parts[0], int(parts[1]), int(parts[2])
            if w == PADDING_TOKEN:
                continue
            if i != len(words):
                raise DataError(f"{path}:{lineno}: ids must be dense and sorted")
            words.append(w)
            freqs.append(c)
    if min_count is None:
        min_count = min(freqs) if freqs else 1
    return Vocabulary(tuple(words), tuple(freqs), min_count)


# --- corpus readers ------------------------------------------------------


def read_jsonl_corpus(path: str | Path) -> Iterator[tuple[str, str]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                yield str(rec["doc_id"]), rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DataError(f"{path}:{lineno}: bad document record ({e})") from e


_DOC_RE = re.compile(r"<DOC>(.*?)</DOC>", re.S | re.I)
_DOCNO_RE = re.compile(r"<DOCNO>\s*(.*?)\s*</DOCNO>", re.S | re.I)
_TEXT_RE = re.compile(r"<TEXT>(.*?)</TEXT>", re.S | re.I)


def read_trec_sgml(path: str | Path) -> Iterator[tuple[str, str]]:
    """Minimal TREC reader: ``<DOC>``, ``<DOCNO>`` and ``<TEXT>`` only."""
    raw = Path(path).read_text(encoding="utf-8", errors="replace")
    for m in _DOC_RE.finditer(raw):
        body = m.group(1)
        docno = _DOCNO_RE.search(body)
        if docno is None:
            raise DataError(f"{path}: <DOC> without <DOCNO> at offset {m.start()}")
        text = " ".join(t for t in _TEXT_RE.findall(body))
        yield docno.group(1), text


def read_corpus(path: str | Path, fmt: Optional[str] = None) -> Iterator[tuple[str, str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus not found: {path}")
    if fmt is None:
        fmt = "trec" if path.suffix.lower() in {".sgml", ".trec", ".xml"} else "jsonl"
    if fmt == "trec":
        return read_trec_sgml(path)
    if fmt == "jsonl":
        return read_jsonl_corpus(path)
    raise ValueError(f"unknown corpus format {fmt!r}")


def load_corpus(
    path: str | Path,
    stopwords: Optional[frozenset[str]] = None,
    fmt: Optional[str] = None,
) -> list[Document]:
    docs = [Document(doc_id, tuple(tokenize(text, stopwords))) for doc_id, text in read_corpus(path, fmt)]
    seen = set()
    for d in docs:
        if d.doc_id in seen:
            raise DataError(f"duplicate doc_id {d.doc_id!r}")
        seen.add(d.doc_id)
    return docs


def read_topics(path: str | Path, stopwords: Optional[frozenset[str]] = None) -> dict[str, list[str]]:
    """Topics file: ``topic_id<TAB>query text`` per line."""
    topics = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t", 1)
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'topic<TAB>query'")
            topics[parts[0].strip()] = tokenize(parts[1], stopwords)
    return topics
