import numpy as np
import pytest

from nnlmir.baseline import build_index, retrieve_topk
from nnlmir.corpus import Document, build_vocabulary, encode_documents, tokenize
from nnlmir.huffman import build_huffman
from nnlmir.nnlm import NeuralConfig, NeuralLM, init_params
from nnlmir.rerank import encode_query
from nnlmir.synthetic import SyntheticConfig, generate


def small_model(arch="M2", vocab=20, dims=4, n=5, kappa=4, seed=0, noisy=True):
    """Random model with non-trivial bias and HSM vectors."""
    rng = np.random.default_rng(seed)
    config = NeuralConfig(arch=arch, n=n, m0=dims, m1=dims, m2=dims, kappa=kappa)
    tree = build_huffman(rng.integers(1, 40, size=vocab))
    params = init_params(config, vocab, seed=seed)
    if noisy:
        params.b[:] = rng.normal(scale=0.3, size=params.b.shape)
        params.hsm[:] = rng.normal(scale=0.8, size=params.hsm.shape)
    return NeuralLM(config, params, tree)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_collection():
    """A 40-document synthetic collection with its index and BM25 candidates."""
    col = generate(SyntheticConfig(n_topics=5, docs_per_topic=4, n_background_docs=20,
                                   n_function_words=30, n_content_words=30, min_len=20, max_len=40))
    raw = [Document(d, tuple(tokenize(t))) for d, t in col.docs]
    vocab = build_vocabulary(raw, 1)
    docs = encode_documents(raw, vocab)
    index = build_index(raw)
    queries = {t: encode_query(t, tokenize(q), index, vocab) for t, q in col.topics.items()}
    cands = {t: retrieve_topk(list(q.coll_ids), index, 100) for t, q in queries.items()}
    return {"col": col, "docs": docs, "vocab": vocab, "index": index, "queries": queries,
            "cands": cands, "tree": build_huffman(vocab.frequencies)}


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Collects one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def add(line):
        print(line)
        lines.append(line)

    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
