"""Synthetic Markov-grammar collection with topics and relevance judgments.

Background text comes from a sparse first-order Markov chain over
"function" words. Each topic owns an ordered phrase of content words;
documents about a topic repeat its phrase in order, while every document
also carries content words of other topics, sometimes as scrambled
phrases. Queries are phrase prefixes, so plain bag-of-words matching
retrieves many non-relevant documents and word order carries the signal.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import stem


@dataclass(frozen=True)
class SyntheticConfig:
    n_topics: int = 50
    docs_per_topic: int = 8
    n_background_docs: int = 100
    n_function_words: int = 100
    n_content_words: int = 100
    successors: int = 3
    phrase_len: int = 3
    query_len: int = 2
    min_len: int = 60
    max_len: int = 120
    min_repeats: int = 1
    max_repeats: int = 3
    scrambled: int = 6
    distractors: int = 8
    seed: int = 0


@dataclass
class SyntheticCollection:
    docs: list[tuple[str, str]]
    topics: dict[str, str]
    qrels: dict[str, set[str]]
    phrases: dict[str, list[str]]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": out / "corpus.jsonl", "topics": out / "topics.tsv", "qrels": out / "qrels.txt"}
        with open(paths["corpus"], "w", encoding="utf-8") as f:
            for doc_id, text in self.docs:
                f.write(json.dumps({"doc_id": doc_id, "text": text}) + "\n")
        with open(paths["topics"], "w", encoding="utf-8") as f:
            for tid, q in self.topics.items():
                f.write(f"{tid}\t{q}\n")
        with open(paths["qrels"], "w", encoding="utf-8") as f:
            for tid in self.topics:
                for doc_id, _ in self.docs:
                    f.write(f"{tid} 0 {doc_id} {int(doc_id in self.qrels[tid])}\n")
        return paths


def pseudo_words(count: int, rng: np.random.Generator, exclude: frozenset[str] = frozenset()) -> list[str]:
    """Pronounceable distinct words that the Porter stemmer leaves unchanged."""
    cons, vows = "bdfgklmnprstvz", "aiou"
    words: list[str] = []
    seen = set(exclude)
    while len(words) < count:
        syll = rng.integers(2, 4)
        w = "".join(cons[rng.integers(len(cons))] + vows[rng.integers(len(vows))] for _ in range(syll))
        if w not in seen and stem(w) == w:
            seen.add(w)
            words.append(w)
    return words


def generate(config: SyntheticConfig = SyntheticConfig()) -> SyntheticCollection:
    rng = np.random.default_rng(config.seed)
    function = pseudo_words(config.n_function_words, rng)
    content = pseudo_words(config.n_content_words, rng, exclude=frozenset(function))
    nf = len(function)
    succ = np.stack([rng.choice(nf, size=config.successors, replace=False) for _ in range(nf)])
    probs = np.array([0.6, 0.3, 0.1][: config.successors])
    probs = probs / probs.sum()

    def chain(length: int) -> list[str]:
        cur = rng.integers(nf)
        out = []
        for _ in range(length):
            out.append(function[cur])
            cur = succ[cur, rng.choice(config.successors, p=probs)]
        return out

    phrases = {}
    for k in range(config.n_topics):
        tid = str(k + 1)
        phrases[tid] = [content[i] for i in rng.choice(len(content), size=config.phrase_len, replace=False)]
    topic_ids = list(phrases)

    def insert(tokens: list[str], pieces: list[list[str]]) -> list[str]:
        cuts = sorted(rng.integers(0, len(tokens) + 1, size=len(pieces)))
        order = rng.permutation(len(pieces))
        out, prev = [], 0
        for cut, j in zip(cuts, order):
            out.extend(tokens[prev:cut])
            out.extend(pieces[j])
            prev = cut
        out.extend(tokens[prev:])
        return out

    def noise() -> list[list[str]]:
        pieces = [[content[rng.integers(len(content))]] for _ in range(config.distractors)]
        for _ in range(config.scrambled):
            other = phrases[topic_ids[rng.integers(len(topic_ids))]]
            pieces.append(list(rng.permutation(other)))
        return pieces

    docs, qrels = [], {tid: set() for tid in topic_ids}
    counter = 0

    def new_id() -> str:
        nonlocal counter
        counter += 1
        return f"SYN-{counter:05d}"

    for tid in topic_ids:
        for _ in range(config.docs_per_topic):
            body = chain(int(rng.integers(config.min_len, config.max_len + 1)))
            reps = int(rng.integers(config.min_repeats, config.max_repeats + 1))
            doc_id = new_id()
            docs.append((doc_id, " ".join(insert(body, [list(phrases[tid])] * reps + noise()))))
            qrels[tid].add(doc_id)
    for _ in range(config.n_background_docs):
        body = chain(int(rng.integers(config.min_len, config.max_len + 1)))
        docs.append((new_id(), " ".join(insert(body, noise()))))
    # shuffle so relevance does not follow doc_id order
    perm = rng.permutation(len(docs))
    remap = {docs[i][0]: f"SYN-{j + 1:05d}" for j, i in enumerate(perm)}
    docs = sorted(((remap[d], t) for d, t in docs))
    qrels = {tid: {remap[d] for d in rel} for tid, rel in qrels.items()}
    topics = {tid: " ".join(p[: config.query_len]) for tid, p in phrases.items()}
    return SyntheticCollection(docs, topics, qrels, phrases)


def follow_grammar_docs(n_docs: int = 60, length: int = 40, n_words: int = 12, seed: int = 0,
                        first: str = "alpha", second: str = "beta") -> list[list[str]]:
    """Random text in which ``second`` always, and only, follows ``first``."""
    rng = np.random.default_rng(seed)
    filler = [w for w in string.ascii_lowercase[:n_words]]
    docs = []
    for _ in range(n_docs):
        out: list[str] = []
        while len(out) < length:
            if rng.random() < 0.15:
                out.extend([first, second])
            else:
                out.append(filler[rng.integers(len(filler))])
        docs.append(out)
    return docs
