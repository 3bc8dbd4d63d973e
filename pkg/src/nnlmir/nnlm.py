"""Feedforward neural language model with a hierarchical softmax output.

A context of ``n-1`` term ids is embedded, summarised into a state vector
by one of three networks (M1, M2, M2Max), optionally merged with a
document vector, and scored by a Huffman-tree hierarchical softmax.

All probabilities are handled in log space. Everything here is a pure
function of the parameters; only the optimizers in ``training`` mutate them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .huffman import HuffmanTree

ARCHS = ("M1", "M2", "M2Max")
MODES = ("sum", "product")


@dataclass(frozen=True)
class NeuralConfig:
    arch: str = "M2"
    n: int = 5
    m0: int = 100
    m1: int = 100
    m2: int = 100
    kappa: int = 4

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.n < 2:
            raise ValueError("model order n must be >= 2")
        for name in ("m0", "m1", "m2", "kappa"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def context_size(self) -> int:
        return self.n - 1

    @property
    def width1(self) -> int:
        """Output width of the first linear layer."""
        return self.kappa * self.m1 if self.arch == "M2Max" else self.m1

    @property
    def m_f(self) -> int:
        return self.m1 if self.arch == "M1" else self.m2


def param_counts(config: NeuralConfig, vocab_size: int) -> dict[str, int]:
    """Weight counts as tabulated for the three models.

    ``phi`` counts the weight matrices only (the bias of the first layer is
    reported separately); ``word_hsm`` counts one embedding per word plus one
    vector per inner node of the tree. The padding row is not counted.
    """
    c, m0, m1, m2, k = config.context_size, config.m0, config.m1, config.m2, config.kappa
    if config.arch == "M1":
        phi = c * m0 * m1
    elif config.arch == "M2":
        phi = c * m0 * m1 + m1 * m2
    else:
        phi = c * k * m0 * m1 + m1 * m2
    words = vocab_size * m0
    hsm = (vocab_size - 1) * config.m_f
    return {
        "phi": phi,
        "bias": config.width1,
        "words": words,
        "hsm": hsm,
        "word_hsm": words + hsm,
        "total": phi + config.width1 + words + hsm,
    }


@dataclass
class NeuralParams:
    """``embeddings`` has one row per word plus the padding row (last).

    ``A`` stacks the per-position matrices as ``(n-1, width1, m0)``; ``B``
    is ``(m2, m1)`` and absent for M1; ``hsm`` holds one vector per inner
    node of the Huffman tree.
    """

    embeddings: np.ndarray
    A: np.ndarray
    b: np.ndarray
    B: Optional[np.ndarray]
    hsm: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"embeddings": self.embeddings, "A": self.A, "b": self.b}
        if self.B is not None:
            out["B"] = self.B
        out["hsm"] = self.hsm
        return out

    def copy(self) -> "NeuralParams":
        return NeuralParams(
            self.embeddings.copy(), self.A.copy(), self.b.copy(),
            None if self.B is None else self.B.copy(), self.hsm.copy(),
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())

    def check_shapes(self, config: NeuralConfig, n_words: int) -> None:
        expected = {
            "embeddings": (n_words + 1, config.m0),
            "A": (config.context_size, config.width1, config.m0),
            "b": (config.width1,),
            "hsm": (n_words - 1, config.m_f),
        }
        if config.arch != "M1":
            expected["B"] = (config.m2, config.m1)
        elif self.B is not None:
            raise ValueError("M1 has no second linear layer")
        for name, shape in expected.items():
            got = getattr(self, name)
            if got is None or got.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {None if got is None else got.shape}")


def init_params(config: NeuralConfig, n_words: int, seed: int = 0) -> NeuralParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero bias, zero HSM node vectors."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    emb = uniform((n_words + 1, config.m0), config.m0)
    A = uniform((config.context_size, config.width1, config.m0), config.context_size * config.m0)
    b = np.zeros(config.width1)
    B = None if config.arch == "M1" else uniform((config.m2, config.m1), config.m1)
    hsm = np.zeros((n_words - 1, config.m_f))
    return NeuralParams(emb, A, b, B, hsm)


@dataclass(frozen=True)
class DocVector:
    z: np.ndarray
    mode: str = "product"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def identity(cls, dim: int, mode: str) -> "DocVector":
        z = np.zeros(dim) if mode == "sum" else np.ones(dim)
        return cls(z, mode)

    def is_identity(self) -> bool:
        return bool(np.all(self.z == (0.0 if self.mode == "sum" else 1.0)))


def make_contexts(term_ids: Sequence[int], context_size: int, padding_id: int) -> np.ndarray:
    """Left-padded context windows, one row per position of ``term_ids``."""
    ids = np.asarray(term_ids, dtype=np.int64)
    padded = np.concatenate([np.full(context_size, padding_id, dtype=np.int64), ids])
    windows = np.lib.stride_tricks.sliding_window_view(padded, context_size)
    return np.ascontiguousarray(windows[: len(ids)])


# --- forward ---------------------------------------------------------------


def _flat_A(A: np.ndarray) -> np.ndarray:
    """``(n-1, W, m0)`` -> ``(W, (n-1)*m0)`` matching row-major flattened contexts."""
    return A.transpose(1, 0, 2).reshape(A.shape[1], -1)


@dataclass
class PhiCache:
    contexts: np.ndarray
    Z: np.ndarray                         # (batch, (n-1)*m0) concatenated embeddings
    h: Optional[np.ndarray] = None       # tanh(l1) for M2, pooled l1 for M2Max
    argmax: Optional[np.ndarray] = None  # M2Max pooling winners
    s: np.ndarray = field(default=None)


def _check_contexts(contexts, config: NeuralConfig) -> np.ndarray:
    ctx = np.asarray(contexts, dtype=np.int64)
    if ctx.ndim == 1:
        ctx = ctx[None, :]
    if ctx.ndim != 2 or ctx.shape[1] != config.context_size:
        raise ValueError(f"context must have length n-1={config.context_size}, got shape {np.shape(contexts)}")
    return ctx


def maxpool(x: np.ndarray, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Max over consecutive blocks of ``kappa`` entries along the last axis."""
    blocks = x.reshape(*x.shape[:-1], x.shape[-1] // kappa, kappa)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def phi_forward(contexts, params: NeuralParams, config: NeuralConfig) -> tuple[np.ndarray, PhiCache]:
    """State vectors ``s`` of shape ``(batch, m_f)`` (or ``(m_f,)`` for one context)."""
    single = np.ndim(contexts) == 1
    ctx = _check_contexts(contexts, config)
    Z = params.embeddings[ctx].reshape(len(ctx), -1)
    l1 = Z @ _flat_A(params.A).T + params.b
    cache = PhiCache(ctx, Z)
    if config.arch == "M1":
        s = np.tanh(l1)
    elif config.arch == "M2":
        cache.h = np.tanh(l1)
        s = np.tanh(cache.h @ params.B.T)
    else:
        cache.h, cache.argmax = maxpool(l1, config.kappa)
        s = np.tanh(cache.h @ params.B.T)
    cache.s = s
    return (s[0] if single else s), cache


def psi_merge(s: np.ndarray, docvec: DocVector) -> np.ndarray:
    if np.shape(s)[-1] != docvec.z.shape[-1]:
        raise ValueError(f"state dim {np.shape(s)[-1]} != document vector dim {docvec.z.shape[-1]}")
    if docvec.mode == "sum":
        return s + docvec.z
    return s * docvec.z


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _hsm_scores(targets: np.ndarray, v: np.ndarray, tree: HuffmanTree, hsm: np.ndarray):
    nodes = tree.path_nodes[targets]
    signs = tree.path_signs[targets]
    X = hsm[nodes]
    u = np.matmul(X, v[:, :, None])[:, :, 0]
    return nodes, signs, X, u


def hsm_log_prob(targets, v, tree: HuffmanTree, hsm: np.ndarray):
    """``sum_s log sigmoid(-b_s(t) x_s.v)`` over the path of each target."""
    single = np.ndim(targets) == 0
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    vv = np.atleast_2d(v)
    if vv.shape[0] == 1 and len(t) > 1:
        vv = np.broadcast_to(vv, (len(t), vv.shape[1]))
    _, signs, _, u = _hsm_scores(t, vv, tree, hsm)
    lp = np.where(signs != 0, log_sigmoid(-signs * u), 0.0).sum(axis=1)
    return float(lp[0]) if single else lp


def hsm_distribution(v: np.ndarray, tree: HuffmanTree, hsm: np.ndarray) -> np.ndarray:
    """Log-probabilities of every leaf for a single input vector."""
    return hsm_log_prob(np.arange(tree.n_leaves), v, tree, hsm)


def _check_targets(targets: np.ndarray, tree: HuffmanTree) -> None:
    if targets.size and (targets.min() < 0 or targets.max() >= tree.n_leaves):
        raise ValueError("target term out of vocabulary")


def next_token_log_prob(contexts, targets, params: NeuralParams, config: NeuralConfig,
                        tree: HuffmanTree, docvec: Optional[DocVector] = None):
    single = np.ndim(targets) == 0
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    _check_targets(t, tree)
    s, _ = phi_forward(np.atleast_2d(contexts), params, config)
    v = s if docvec is None else psi_merge(s, docvec)
    lp = hsm_log_prob(t, v, tree, params.hsm)
    return float(lp[0]) if single else lp


# --- backward --------------------------------------------------------------


@dataclass(frozen=True)
class SparseRows:
    """Row-sparse gradient: ``values[i]`` belongs to row ``indices[i]`` (unique)."""

    indices: np.ndarray
    values: np.ndarray

    def dense(self, n_rows: int) -> np.ndarray:
        out = np.zeros((n_rows, self.values.shape[1]))
        out[self.indices] = self.values
        return out


def scatter_rows(row_ids: np.ndarray, coef: np.ndarray, src_index: np.ndarray, src: np.ndarray) -> SparseRows:
    """``out[row_ids[k]] += coef[k] * src[src_index[k]]`` with unique output rows."""
    uniq, inv = np.unique(row_ids, return_inverse=True)
    M = sp.csr_matrix((coef, (inv, src_index)), shape=(len(uniq), src.shape[0]))
    return SparseRows(uniq, np.asarray(M @ src))


def hsm_backward(targets: np.ndarray, v: np.ndarray, weights: np.ndarray, tree: HuffmanTree,
                 hsm: np.ndarray, need_nodes: bool = True):
    """Weighted NLL and its gradients w.r.t. ``v`` and the visited node vectors."""
    nodes, signs, X, u = _hsm_scores(targets, v, tree, hsm)
    active = signs != 0
    nll = -np.where(active, log_sigmoid(-signs * u), 0.0).sum(axis=1)
    loss = float(np.dot(weights, nll))
    # d(-log sigmoid(-b u))/du = b * sigmoid(b u)
    g = np.where(active, signs * expit(signs * u), 0.0) * weights[:, None]
    dv = np.matmul(g[:, None, :], X)[:, 0, :]
    dnodes = None
    if need_nodes:
        rows = np.broadcast_to(np.arange(len(targets))[:, None], nodes.shape)
        keep = active & (g != 0.0)
        dnodes = scatter_rows(nodes[keep], g[keep], rows[keep], v)
    return loss, nll, dv, dnodes


def merge_backward(dv: np.ndarray, s: np.ndarray, docvec: DocVector) -> tuple[np.ndarray, np.ndarray]:
    if docvec.mode == "sum":
        return dv, dv.sum(axis=0)
    return dv * docvec.z, (dv * s).sum(axis=0)


def phi_backward(ds: np.ndarray, cache: PhiCache, params: NeuralParams, config: NeuralConfig,
                 wrt: Iterable[str]) -> dict:
    wrt = set(wrt)
    grads = {}
    dpre = ds * (1.0 - cache.s ** 2)
    if config.arch == "M1":
        dl1 = dpre
    else:
        if "B" in wrt:
            grads["B"] = dpre.T @ cache.h
        dh = dpre @ params.B
        if config.arch == "M2":
            dl1 = dh * (1.0 - cache.h ** 2)
        else:
            B_, m1 = dh.shape
            dl1 = np.zeros((B_, m1, config.kappa))
            np.put_along_axis(dl1, cache.argmax[..., None], dh[..., None], axis=-1)
            dl1 = dl1.reshape(B_, m1 * config.kappa)
    c, W, m0 = params.A.shape
    if "A" in wrt:
        grads["A"] = (dl1.T @ cache.Z).reshape(W, c, m0).transpose(1, 0, 2)
    if "b" in wrt:
        grads["b"] = dl1.sum(axis=0)
    if "embeddings" in wrt:
        dZ = (dl1 @ _flat_A(params.A)).reshape(-1, m0)
        flat_ids = cache.contexts.ravel()
        grads["embeddings"] = scatter_rows(flat_ids, np.ones(len(flat_ids)), np.arange(len(flat_ids)), dZ)
    return grads


PARAM_NAMES = ("embeddings", "A", "b", "B", "hsm")


def backward(contexts, targets, weights, params: NeuralParams, config: NeuralConfig, tree: HuffmanTree,
             docvec: Optional[DocVector] = None, wrt: Optional[Iterable[str]] = None) -> tuple[float, dict]:
    """Weighted NLL ``-sum_i w_i log P(t_i | ctx_i)`` and its exact gradients.

    ``wrt`` restricts which gradients are produced; names are those of
    ``PARAM_NAMES`` plus ``"z"`` for the document vector. By default all
    model parameters are included, and ``"z"`` when a document vector is
    given. ``embeddings`` and ``hsm`` gradients are ``SparseRows``.
    """
    if wrt is None:
        wrt = {n for n in PARAM_NAMES if n != "B" or config.arch != "M1"}
        if docvec is not None:
            wrt.add("z")
    wrt = set(wrt)
    t = np.asarray(targets, dtype=np.int64)
    _check_targets(t, tree)
    w = np.asarray(weights, dtype=np.float64)
    s, cache = phi_forward(np.atleast_2d(contexts), params, config)
    v = s if docvec is None else psi_merge(s, docvec)
    loss, _, dv, dnodes = hsm_backward(t, v, w, tree, params.hsm, need_nodes="hsm" in wrt)
    grads: dict = {}
    if dnodes is not None:
        grads["hsm"] = dnodes
    if docvec is None:
        ds = dv
    else:
        ds, dz = merge_backward(dv, s, docvec)
        if "z" in wrt:
            grads["z"] = dz
    phi_wrt = wrt & {"embeddings", "A", "b", "B"}
    if phi_wrt:
        grads.update(phi_backward(ds, cache, params, config, phi_wrt))
    return loss, grads


@dataclass
class NeuralLM:
    """Config, parameters and tree bundled for convenience."""

    config: NeuralConfig
    params: NeuralParams
    tree: HuffmanTree

    @property
    def n_words(self) -> int:
        return self.tree.n_leaves

    @property
    def padding_id(self) -> int:
        return self.tree.n_leaves

    def contexts(self, term_ids: Sequence[int]) -> np.ndarray:
        return make_contexts(term_ids, self.config.context_size, self.padding_id)

    def sequence_log_probs(self, term_ids: Sequence[int], docvec: Optional[DocVector] = None) -> np.ndarray:
        """Per-position log P(t_i | previous n-1 terms), left-padded."""
        if len(term_ids) == 0:
            return np.zeros(0)
        return next_token_log_prob(self.contexts(term_ids), np.asarray(term_ids), self.params,
                                   self.config, self.tree, docvec)
