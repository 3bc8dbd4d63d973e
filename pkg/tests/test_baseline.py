import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnlmir.baseline import (
    bm25_score,
    build_index,
    estimate_collection_lm,
    estimate_count_lm,
    jm_log_prob,
    read_index,
    retrieve_topk,
    write_index,
)

A, B = 0, 1

seqs = st.lists(st.integers(0, 5), max_size=30)


def test_unigram_counts():
    lm = estimate_count_lm([A, B, A], 1)
    assert lm.prob(A) == pytest.approx(2 / 3)
    assert lm.prob(B) == pytest.approx(1 / 3)


def test_bigram_counts():
    lm = estimate_count_lm([A, A, B], 2)
    assert lm.prob(A, [A]) == 0.5
    assert lm.prob(B, [A]) == 0.5
    assert lm.prob(A, [B]) == 0.0


def test_order_longer_than_sequence_is_empty():
    lm = estimate_count_lm([A, B], 4)
    assert lm.counts == {} and lm.prob(A, [A, A, B]) == 0.0


def test_collection_concatenates_counts():
    lm = estimate_collection_lm([[A], [B]], 1)
    assert lm.prob(A) == lm.prob(B) == 0.5


def test_collection_bigrams_do_not_cross_documents():
    lm = estimate_collection_lm([[A], [B]], 2)
    assert lm.counts == {}


@given(seqs, st.integers(1, 3))
def test_every_context_normalises(seq, n):
    lm = estimate_count_lm(seq, n)
    for ctx, counts in lm.counts.items():
        assert sum(lm.prob(t, ctx) for t in counts) == pytest.approx(1.0, abs=1e-12)


def test_jm_hand_value():
    d = estimate_count_lm([A, B, A])
    c = estimate_count_lm([A, B])
    assert jm_log_prob([A], d, c, 0.5) == pytest.approx(math.log(7 / 12))


def test_jm_endpoints():
    d = estimate_count_lm([A, A])
    c = estimate_count_lm([A, B])
    assert jm_log_prob([B], d, c, 0.0) == -math.inf
    assert jm_log_prob([A, B], d, c, 1.0) == pytest.approx(2 * math.log(0.5))


def test_jm_rises_from_minus_infinity():
    d = estimate_count_lm([A, A])
    c = estimate_count_lm([A, B])
    scores = [jm_log_prob([A, B], d, c, lam) for lam in (0.0, 0.1, 0.5, 0.9)]
    assert scores[0] == -math.inf
    assert scores == sorted(scores)


def test_jm_rejects_bad_lambda():
    lm = estimate_count_lm([A])
    with pytest.raises(ValueError):
        jm_log_prob([A], lm, lm, 1.5)


def _index(*docs):
    return build_index([(f"d{i}", toks) for i, toks in enumerate(docs)])


def test_bm25_hand_value():
    idx = _index(["x", "y"], ["z", "w"])
    (q,) = idx.encode_query(["x"])
    assert bm25_score([q], "d0", idx) == pytest.approx(math.log(2))


def test_bm25_zero_cases():
    idx = _index(["x", "y"], ["z", "w"])
    assert bm25_score([], "d0", idx) == 0.0
    assert bm25_score(idx.encode_query(["z"]), "d0", idx) == 0.0
    with pytest.raises(KeyError):
        bm25_score([], "nope", idx)


corpora = st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10), min_size=1, max_size=8)


@given(corpora, st.lists(st.sampled_from("abcdefg"), max_size=4))
def test_bm25_additive_and_order_free(docs, query):
    idx = _index(*docs)
    q = idx.encode_query(query)
    for d in idx.doc_lengths:
        total = bm25_score(q, d, idx)
        assert total == pytest.approx(sum(bm25_score([t], d, idx) for t in q))
        assert total == pytest.approx(bm25_score(q[::-1], d, idx))


@settings(max_examples=60)
@given(corpora, st.lists(st.sampled_from("abcdefg"), max_size=4), st.integers(1, 10))
def test_topk_equals_brute_force(docs, query, k):
    idx = _index(*docs)
    q = idx.encode_query(query)
    brute = sorted(((d, bm25_score(q, d, idx)) for d in idx.doc_lengths), key=lambda x: (-x[1], x[0]))
    brute = [(d, s) for d, s in brute if s > 0][:k]
    got = retrieve_topk(q, idx, k)
    assert [d for d, _ in got] == [d for d, _ in brute]
    assert [s for _, s in got] == pytest.approx([s for _, s in brute])


def test_topk_ties_and_bounds():
    idx = _index(["x", "y"], ["x", "y"], ["z", "z"])
    q = idx.encode_query(["x"])
    assert [d for d, _ in retrieve_topk(q, idx, 10)] == ["d0", "d1"]
    assert [d for d, _ in retrieve_topk(q, idx, 1)] == ["d0"]
    with pytest.raises(ValueError):
        retrieve_topk(q, idx, 0)


def test_index_invariants_and_roundtrip(tmp_path):
    idx = _index(["b", "a", "b"], ["c"], [])
    assert idx.total_tokens == 4 and idx.N == 3
    for plist in idx.postings.values():
        assert list(plist) == sorted(plist)
    buf = io.BytesIO()
    write_index(idx, buf)
    p = tmp_path / "idx.bin"
    p.write_bytes(buf.getvalue())
    back = read_index(p)
    assert back.terms == idx.terms and back.postings == idx.postings and back.doc_lengths == idx.doc_lengths


def test_index_independent_of_input_order():
    a = build_index([("d1", ["x", "y"]), ("d0", ["y", "z"])])
    b = build_index([("d0", ["y", "z"]), ("d1", ["x", "y"])])
    assert a.terms == b.terms and a.postings == b.postings
