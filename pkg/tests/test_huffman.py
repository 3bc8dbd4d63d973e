import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnlmir.huffman import build_huffman

from oracles import optimal_code_cost


def test_two_leaves():
    t = build_huffman([1, 1])
    assert list(t.depth) == [1, 1]
    assert {t.code(0), t.code(1)} == {"0", "1"}


def test_three_leaves():
    t = build_huffman([1, 1, 2])
    assert list(t.depth) == [2, 2, 1]


def test_ties_prefer_earliest_tree():
    # leaves 0 and 1 merge first and go left, right
    t = build_huffman([1, 1, 1, 1])
    assert [t.code(i) for i in range(4)] == ["00", "01", "10", "11"]


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_huffman([3])
    with pytest.raises(ValueError):
        build_huffman([1, 0])


def test_deterministic():
    f = np.random.default_rng(0).integers(1, 9, size=50)
    a, b = build_huffman(f), build_huffman(list(f))
    assert np.array_equal(a.path_nodes, b.path_nodes) and np.array_equal(a.path_signs, b.path_signs)


freq_lists = st.lists(st.integers(1, 1000), min_size=2, max_size=60)


@given(freq_lists)
def test_code_is_complete_and_prefix_free(freqs):
    t = build_huffman(freqs)
    codes = [t.code(i) for i in range(len(freqs))]
    assert sum(2.0 ** -len(c) for c in codes) == pytest.approx(1.0)
    for a, b in itertools.permutations(codes, 2):
        assert not b.startswith(a)


@given(freq_lists)
def test_inner_node_structure(freqs):
    t = build_huffman(freqs)
    assert t.n_inner == len(freqs) - 1
    used = {int(n) for i in range(len(freqs)) for n in t.path(i)[0]}
    assert used == set(range(t.n_inner))
    root = t.n_inner - 1
    assert all(t.path(i)[0][0] == root for i in range(len(freqs)))
    assert (t.path_signs[~t.mask] == 0).all()


@given(freq_lists)
def test_heavier_words_are_not_deeper(freqs):
    t = build_huffman(freqs)
    for i, j in itertools.combinations(range(len(freqs)), 2):
        if freqs[i] > freqs[j]:
            assert t.depth[i] <= t.depth[j]


@pytest.mark.parametrize("size", [2, 3, 4, 5, 6])
def test_matches_brute_force_small(size):
    for combo in itertools.combinations_with_replacement(range(1, 5), size):
        assert build_huffman(combo).weighted_path_length(combo) == optimal_code_cost(combo)
