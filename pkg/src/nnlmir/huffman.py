"""Huffman coding tree for the hierarchical softmax."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LEFT, RIGHT = -1, 1


@dataclass(frozen=True)
class HuffmanTree:
    """Root-to-leaf paths over inner nodes ``0 .. n_leaves-2`` (root last).

    ``path_nodes[t, :depth[t]]`` are the inner nodes visited for leaf ``t``
    and ``path_signs`` the matching branch signs (-1 left, +1 right). Entries
    past the depth are padding (node 0, sign 0) and must be masked.
    """

    n_leaves: int
    path_nodes: np.ndarray
    path_signs: np.ndarray
    depth: np.ndarray

    @property
    def n_inner(self) -> int:
        return self.n_leaves - 1

    @property
    def max_depth(self) -> int:
        return self.path_nodes.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.max_depth)[None, :] < self.depth[:, None]

    def path(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        d = self.depth[t]
        return self.path_nodes[t, :d], self.path_signs[t, :d]

    def code(self, t: int) -> str:
        return "".join("0" if s == LEFT else "1" for s in self.path(t)[1])

    def weighted_path_length(self, freqs: Sequence[int]) -> int:
        return int(np.dot(np.asarray(freqs, dtype=np.int64), self.depth))


def build_huffman(freqs: Sequence[int]) -> HuffmanTree:
    """Classic Huffman merge of the two lightest trees.

    Among equal weights the tree created earliest wins: leaves in id order,
    then inner nodes in creation order. The first tree popped becomes the
    left child.
    """
    n = len(freqs)
    if n < 2:
        raise ValueError(f"Huffman tree needs at least 2 leaves, got {n}")
    if min(freqs) < 1:
        raise ValueError("all frequencies must be >= 1")
    # node ids: leaves 0..n-1, inner node k -> n + k
    heap = [(int(f), i) for i, f in enumerate(freqs)]
    heapq.heapify(heap)
    parent = np.empty(2 * n - 1, dtype=np.int64)
    sign = np.zeros(2 * n - 1, dtype=np.int8)
    created = n
    while len(heap) > 1:
        w1, a = heapq.heappop(heap)
        w2, b = heapq.heappop(heap)
        parent[a], sign[a] = created, LEFT
        parent[b], sign[b] = created, RIGHT
        heapq.heappush(heap, (w1 + w2, created))
        created += 1
    root = created - 1
    parent[root] = -1

    paths, signs = [], []
    for leaf in range(n):
        nodes, sgn = [], []
        node = leaf
        while node != root:
            nodes.append(parent[node] - n)
            sgn.append(sign[node])
            node = parent[node]
        paths.append(nodes[::-1])
        signs.append(sgn[::-1])
    depth = np.array([len(p) for p in paths], dtype=np.int64)
    D = int(depth.max())
    path_nodes = np.zeros((n, D), dtype=np.int64)
    path_signs = np.zeros((n, D), dtype=np.float64)
    for t in range(n):
        path_nodes[t, :depth[t]] = paths[t]
        path_signs[t, :depth[t]] = signs[t]
    for arr in (path_nodes, path_signs, depth):
        arr.setflags(write=False)
    return HuffmanTree(n, path_nodes, path_signs, depth)
