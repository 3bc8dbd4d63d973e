import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnlmir.corpus import (
    Document,
    build_vocabulary,
    encode,
    load_corpus,
    read_topics,
    read_vocabulary,
    split_words,
    stem,
    tokenize,
    write_vocabulary,
)
from nnlmir.errors import DataError

# Reference outputs of the original algorithm.
PORTER = {
    "caresses": "caress", "ponies": "poni", "ties": "ti", "caress": "caress", "cats": "cat",
    "feed": "feed", "agreed": "agre", "plastered": "plaster", "motoring": "motor", "sing": "sing",
    "conflated": "conflat", "troubled": "troubl", "sized": "size", "hopping": "hop",
    "falling": "fall", "hissing": "hiss", "filing": "file", "happy": "happi", "sky": "sky",
    "relational": "relat", "conditional": "condit", "rational": "ration",
    "generalization": "gener", "electrical": "electr", "adjustable": "adjust",
    "bowdlerize": "bowdler", "controll": "control", "roll": "roll",
}


@pytest.mark.parametrize("word,expected", sorted(PORTER.items()))
def test_porter_reference(word, expected):
    assert stem(word) == expected


def test_tokenize_example():
    assert tokenize("The Running dogs, ran!") == ["the", "run", "dog", "ran"]


def test_tokenize_stopwords():
    assert tokenize("the running dogs", frozenset({"the"})) == ["run", "dog"]


def test_tokenize_empty():
    assert tokenize("") == []
    assert tokenize("  ,;-- ") == []


@given(st.text())
def test_split_is_idempotent(text):
    words = split_words(text)
    assert split_words(" ".join(words)) == words


@given(st.text())
def test_tokens_are_lowercase_alnum(text):
    for tok in tokenize(text):
        assert tok and tok == tok.lower()
        assert all(c.isalnum() for c in tok)


def _docs(*texts):
    return [Document(f"d{i}", tuple(tokenize(t))) for i, t in enumerate(texts)]


def test_vocabulary_order_and_cutoff():
    docs = _docs("b b a a c", "a b d")
    v = build_vocabulary(docs, min_count=2)
    # frequency descending, ties lexicographic
    assert v.words == ("a", "b")
    assert v.frequencies == (3, 3)
    assert v.padding_id == 2 and v.n_rows == 3
    assert "c" not in v


def test_vocabulary_single_word_corpus():
    v = build_vocabulary(_docs("x x x x x"), min_count=5)
    assert v.words == ("x",) and v.frequencies == (5,)


def test_vocabulary_empty_corpus():
    with pytest.raises(DataError):
        build_vocabulary([], min_count=1)


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=12), min_size=1, max_size=8),
       st.integers(1, 4))
def test_vocabulary_invariants(token_lists, min_count):
    if not any(token_lists):
        return
    v = build_vocabulary(token_lists, min_count)
    assert all(f >= min_count for f in v.frequencies)
    assert [v[w] for w in v.words] == list(range(v.size))
    keys = [(-f, w) for w, f in zip(v.words, v.frequencies)]
    assert keys == sorted(keys)


def test_encode_drops_oov():
    v = build_vocabulary(_docs("a a b"), min_count=2)
    assert encode(["a", "b", "a"], v) == [0, 0]


def test_vocabulary_roundtrip(tmp_path):
    v = build_vocabulary(_docs("apple apple pear apple fig pear"), min_count=1)
    buf = io.StringIO()
    write_vocabulary(v, buf)
    p = tmp_path / "vocab.tsv"
    p.write_text(buf.getvalue())
    assert read_vocabulary(p) == v
    assert buf.getvalue().splitlines()[-1] == f"<pad>\t{v.padding_id}\t0"


def test_load_jsonl_and_trec(tmp_path):
    j = tmp_path / "c.jsonl"
    j.write_text("\n".join(json.dumps({"doc_id": d, "text": t}) for d, t in [("x1", "Cats sat"), ("x2", "")]))
    docs = load_corpus(j)
    assert [d.doc_id for d in docs] == ["x1", "x2"]
    assert docs[0].tokens == ("cat", "sat") and docs[1].tokens == ()

    t = tmp_path / "c.trec"
    t.write_text("<DOC>\n<DOCNO> FT911-3 </DOCNO>\n<TEXT>Ponies ran</TEXT>\n</DOC>\n")
    (doc,) = load_corpus(t)
    assert doc.doc_id == "FT911-3" and doc.tokens == ("poni", "ran")


def test_duplicate_doc_ids_rejected(tmp_path):
    j = tmp_path / "c.jsonl"
    j.write_text('{"doc_id": "a", "text": "x"}\n{"doc_id": "a", "text": "y"}\n')
    with pytest.raises(DataError, match="duplicate"):
        load_corpus(j)


def test_malformed_jsonl_reports_line(tmp_path):
    j = tmp_path / "c.jsonl"
    j.write_text('{"doc_id": "a", "text": "x"}\nnot json\n')
    with pytest.raises(DataError, match=":2:"):
        load_corpus(j)


def test_read_topics(tmp_path):
    p = tmp_path / "topics.tsv"
    p.write_text("51\tAirbus subsidies\n52\tSouth African sanctions\n")
    assert read_topics(p) == {"51": ["airbu", "subsidi"], "52": ["south", "african", "sanction"]}
