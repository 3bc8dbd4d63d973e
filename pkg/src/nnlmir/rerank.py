"""Reranking of first-pass candidates with the neural mixture score.

Each query term ``q_i`` is scored as::

    (1 - lam) * ((1 - gamma) * P(q_i | doc) + gamma * P(q_i | collection))
        + lam * P_NN(q_i | previous n-1 query terms [, doc vector])

and a document's score is the sum of the logs. The neural context is built
from the query alone, left-padded. Query terms outside the neural
vocabulary keep only the unigram part (no renormalisation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .baseline import CountLM, InvertedIndex, jm_log_prob, safe_log
from .corpus import Vocabulary
from .errors import DataError
from .nnlm import DocVector, NeuralLM, hsm_log_prob, phi_forward, psi_merge

Run = dict[str, list[tuple[str, float]]]


class MissingDocVectorError(DataError):
    def __init__(self, missing: Sequence[str]):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:10])
        more = f" (and {len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"no document vector for {len(self.missing)} candidates: {shown}{more}")


@dataclass(frozen=True)
class MixParams:
    lam: float
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("lam", "gamma"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")


@dataclass(frozen=True)
class EncodedQuery:
    """Query positions known to the collection, with their neural ids
    (``None`` where the stem is outside the neural vocabulary)."""

    topic_id: str
    coll_ids: tuple[int, ...]
    nn_ids: tuple[Optional[int], ...]


def encode_query(topic_id: str, tokens: Sequence[str], index: InvertedIndex,
                 vocab: Optional[Vocabulary]) -> EncodedQuery:
    coll, nn = [], []
    for tok in tokens:
        cid = index.terms.get(tok)
        if cid is None:
            continue  # unseen in the collection: same factor for every document
        coll.append(cid)
        nn.append(vocab.get(tok) if vocab is not None else None)
    return EncodedQuery(topic_id, tuple(coll), tuple(nn))


@dataclass
class QueryStates:
    """Doc-independent part of the neural score: positions, targets and
    the state vectors of their contexts."""

    positions: np.ndarray
    targets: np.ndarray
    s: np.ndarray


def query_states(query: EncodedQuery, model: NeuralLM) -> QueryStates:
    positions = np.array([i for i, t in enumerate(query.nn_ids) if t is not None], dtype=np.int64)
    targets = np.array([query.nn_ids[i] for i in positions], dtype=np.int64)
    if not len(targets):
        return QueryStates(positions, targets, np.zeros((0, model.config.m_f)))
    s, _ = phi_forward(model.contexts(targets), model.params, model.config)
    return QueryStates(positions, targets, s)


def query_nn_log_probs(query: EncodedQuery, model: NeuralLM, docvec: Optional[DocVector] = None,
                       states: Optional[QueryStates] = None) -> np.ndarray:
    """Per-position log P_NN, NaN where the term has no neural id."""
    st = states if states is not None else query_states(query, model)
    out = np.full(len(query.coll_ids), np.nan)
    if len(st.targets):
        v = st.s if docvec is None else psi_merge(st.s, docvec)
        out[st.positions] = hsm_log_prob(st.targets, v, model.tree, model.params.hsm)
    return out


def mixed_score(query: EncodedQuery, doc_lm: CountLM, coll_lm: CountLM, mix: MixParams,
                nn_log_probs: Optional[np.ndarray]) -> float:
    score = 0.0
    for i, t in enumerate(query.coll_ids):
        unigram = (1.0 - mix.gamma) * doc_lm.prob(t) + mix.gamma * coll_lm.prob(t)
        p = (1.0 - mix.lam) * unigram
        if nn_log_probs is not None and not math.isnan(nn_log_probs[i]):
            p = p + mix.lam * math.exp(nn_log_probs[i])
        score += safe_log(p)
    return score


def nn_mixed_log_prob(query: EncodedQuery, doc_lm: CountLM, coll_lm: CountLM, mix: MixParams,
                      model: Optional[NeuralLM] = None, docvec: Optional[DocVector] = None) -> float:
    if doc_lm.n != 1 or coll_lm.n != 1:
        raise ValueError("the mixture uses unigram document and collection models")
    nn = None
    if mix.lam > 0.0:
        if model is None:
            raise ValueError("lambda > 0 requires a neural model")
        nn = query_nn_log_probs(query, model, docvec)
    return mixed_score(query, doc_lm, coll_lm, mix, nn)


def _candidate_ids(cands) -> list[str]:
    return [c[0] if isinstance(c, tuple) else c for c in cands]


def _ranked(scores: Mapping[str, float]) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda ds: (-ds[1], ds[0]))


def rerank_run(candidates: Mapping[str, Sequence], queries: Mapping[str, EncodedQuery], mix: MixParams,
               index: InvertedIndex, model: Optional[NeuralLM] = None,
               docvecs: Optional[Mapping[str, DocVector]] = None,
               coll_lm: Optional[CountLM] = None) -> Run:
    """Reorder each topic's candidates by the mixture score (ties: doc_id).

    With ``docvecs`` every candidate is scored with its own document
    vector; a candidate without one is an error.
    """
    if docvecs is not None:
        missing = {d for cands in candidates.values() for d in _candidate_ids(cands) if d not in docvecs}
        if missing:
            raise MissingDocVectorError(missing)
    if mix.lam > 0.0 and model is None:
        raise ValueError("lambda > 0 requires a neural model")
    coll_lm = coll_lm if coll_lm is not None else index.collection_lm()
    run: Run = {}
    for topic, cands in candidates.items():
        query = queries[topic]
        states = query_states(query, model) if mix.lam > 0.0 else None
        generic = query_nn_log_probs(query, model, None, states) if states is not None else None
        scores = {}
        for doc_id in _candidate_ids(cands):
            nn = generic
            if states is not None and docvecs is not None:
                nn = query_nn_log_probs(query, model, docvecs[doc_id], states)
            scores[doc_id] = mixed_score(query, index.doc_lm(doc_id), coll_lm, mix, nn)
        run[topic] = _ranked(scores)
    return run


def rerank_jm(candidates: Mapping[str, Sequence], queries: Mapping[str, EncodedQuery], lam: float,
              index: InvertedIndex, coll_lm: Optional[CountLM] = None) -> Run:
    """Unigram Jelinek-Mercer baseline over the same candidates."""
    coll_lm = coll_lm if coll_lm is not None else index.collection_lm()
    run: Run = {}
    for topic, cands in candidates.items():
        q = list(queries[topic].coll_ids)
        run[topic] = _ranked({d: jm_log_prob(q, index.doc_lm(d), coll_lm, lam) for d in _candidate_ids(cands)})
    return run


def run_tag(model_name: str, mode: Optional[str], lam: float, gamma: float) -> str:
    short = {None: "gen", "sum": "sum", "product": "prod"}[mode]
    return f"{model_name}-{short}-l{lam:g}-g{gamma:g}"


def sweep_lambda(candidates: Mapping[str, Sequence], queries: Mapping[str, EncodedQuery],
                 lambdas: Sequence[float], gamma: float, index: InvertedIndex, model: Optional[NeuralLM],
                 docvecs: Optional[Mapping[str, DocVector]] = None, model_name: str = "M") -> dict[str, Run]:
    """One reranked run per lambda, keyed by its run tag."""
    mode = None
    if docvecs:
        mode = next(iter(docvecs.values())).mode
    coll_lm = index.collection_lm()
    runs = {}
    for lam in lambdas:
        mix = MixParams(lam, gamma)
        runs[run_tag(model_name, mode, lam, gamma)] = rerank_run(candidates, queries, mix, index, model,
                                                                 docvecs, coll_lm)
    return runs
