"""Training loops: embedding pretraining, generic LM training and
per-document vector fitting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from .corpus import Document, Vocabulary
from .errors import DataError, NumericalError
from .huffman import HuffmanTree
from .nnlm import (
    DocVector,
    NeuralLM,
    SparseRows,
    backward,
    hsm_backward,
    make_contexts,
    merge_backward,
    phi_forward,
    psi_merge,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.1
    decay: float = 2e-4
    batch_size: int = 100
    max_iters: int = 50_000
    subsample: float = 1e-3
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def lr_schedule(k: int, config: TrainConfig) -> float:
    return config.lr0 / (1.0 + k * config.decay)


def word_weights(vocab: Vocabulary, subsample: float = 1e-3) -> np.ndarray:
    """``min(1, sqrt(s / f(t)))`` with ``f`` the relative corpus frequency."""
    freqs = np.asarray(vocab.frequencies, dtype=np.float64)
    rel = freqs / freqs.sum()
    return np.minimum(1.0, np.sqrt(subsample / rel))


def word_weight(t: int, vocab: Vocabulary, subsample: float = 1e-3) -> float:
    rel = vocab.frequency(t) / vocab.total_count
    return min(1.0, math.sqrt(subsample / rel))


def _ids(doc) -> np.ndarray:
    return np.asarray(doc.term_ids if isinstance(doc, Document) else doc, dtype=np.int64)


def _batch(model: NeuralLM, seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    ctx = [model.contexts(s) for s in seqs if len(s)]
    if not ctx:
        return np.zeros((0, model.config.context_size), dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(ctx), np.concatenate([s for s in seqs if len(s)])


def sgd_apply(params, grads: Mapping, scale: float) -> None:
    """``param -= scale * grad`` for every gradient present."""
    for name, g in grads.items():
        target = getattr(params, name)
        if isinstance(g, SparseRows):
            target[g.indices] -= scale * g.values
        else:
            target -= scale * g


def train_generic(docs: Sequence, model: NeuralLM, config: TrainConfig, weights: np.ndarray,
                  callback: Optional[Callable[[dict], None]] = None) -> tuple[NeuralLM, list[dict]]:
    """Mini-batch SGD on the weighted log-likelihood of whole documents.

    Each step samples ``batch_size`` documents with replacement; every
    position of each contributes. The step follows the gradient of the
    per-document summed weighted NLL averaged over the batch, with rate
    ``lr_schedule(k)``. Returns a new model (the input is not modified)
    and one trace record per logged step.
    """
    seqs = [s for s in (_ids(d) for d in docs) if len(s)]
    if not seqs:
        raise DataError("no non-empty documents to train on")
    rng = np.random.default_rng(config.seed)
    params = model.params.copy()
    out = NeuralLM(model.config, params, model.tree)
    trace = []
    for k in range(config.max_iters):
        picks = rng.integers(0, len(seqs), size=config.batch_size)
        ctx, tgt = _batch(out, [seqs[i] for i in picks])
        w = weights[tgt]
        loss, grads = backward(ctx, tgt, w, params, out.config, out.tree)
        if not math.isfinite(loss):
            raise NumericalError(f"non-finite loss {loss} at step {k} (lr={lr_schedule(k, config):.3g})")
        lr = lr_schedule(k, config)
        sgd_apply(params, grads, lr / config.batch_size)
        if k % config.log_every == 0 or k == config.max_iters - 1:
            nll = loss / w.sum()
            rec = {"step": k, "lr": lr, "weighted_nll": nll, "perplexity": math.exp(nll)}
            trace.append(rec)
            if callback is not None:
                callback(rec)
    if not params.all_finite():
        raise NumericalError("parameters became non-finite during training")
    return out, trace


def perplexity(docs: Sequence, model: NeuralLM, weights: np.ndarray,
               docvecs: Optional[Mapping[str, DocVector]] = None, chunk: int = 200) -> float:
    """``exp(sum w*NLL / sum w)`` over every position of every document.

    With ``docvecs`` each ``Document`` is scored with its own vector
    (documents missing from the table use the generic model).
    """
    total, wsum = 0.0, 0.0
    for start in range(0, len(docs), chunk):
        part = docs[start:start + chunk]
        if docvecs is None:
            ctx, tgt = _batch(model, [_ids(d) for d in part])
            if len(tgt):
                total += backward(ctx, tgt, weights[tgt], model.params, model.config, model.tree, wrt=())[0]
                wsum += weights[tgt].sum()
            continue
        for d in part:
            ids = _ids(d)
            if not len(ids):
                continue
            dv = docvecs.get(d.doc_id) if isinstance(d, Document) else None
            total += backward(model.contexts(ids), ids, weights[ids], model.params, model.config,
                              model.tree, dv, wrt=())[0]
            wsum += weights[ids].sum()
    if wsum == 0.0:
        raise ValueError("zero total weight")
    return math.exp(total / wsum)


# --- CBOW pretraining -------------------------------------------------------


def pretrain_embeddings(docs: Sequence, tree: HuffmanTree, m0: int, window: int = 5, epochs: int = 5,
                        lr0: float = 0.5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """CBOW with hierarchical softmax over the same Huffman tree.

    The mean of the embeddings of up to ``window`` words on each side of a
    position predicts the word at that position. The rate decays linearly
    from ``lr0`` to 0 over all epochs. Returns ``(embeddings, hsm)``; the
    embedding matrix includes the (untrained) padding row.
    """
    seqs = [s for s in (_ids(d) for d in docs) if len(s)]
    if not seqs:
        raise DataError("empty corpus")
    n_words = tree.n_leaves
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.5 / m0, 0.5 / m0, size=(n_words + 1, m0))
    hsm = np.zeros((n_words - 1, m0))
    total = epochs * sum(len(s) for s in seqs)
    done = 0
    for _ in range(epochs):
        for s in seqs:
            L = len(s)
            for i in range(L):
                lr = max(lr0 * (1.0 - done / total), lr0 * 1e-4)
                done += 1
                ctx = np.concatenate([s[max(0, i - window):i], s[i + 1:i + 1 + window]])
                if not len(ctx):
                    continue
                h = emb[ctx].mean(axis=0)
                nodes, signs = tree.path(s[i])
                X = hsm[nodes]
                g = signs * expit(signs * (X @ h))
                grad_h = g @ X
                hsm[nodes] -= lr * np.outer(g, h)
                np.subtract.at(emb, ctx, lr * grad_h / len(ctx))
    return emb, hsm


def read_word_vectors(path: str | Path, vocab: Vocabulary, m0: int, seed: int = 0) -> np.ndarray:
    """Text vectors (``|V| m0`` header, then ``word v1 .. v_m0``).

    Vocabulary words missing from the file keep a seeded uniform
    initialisation; file words outside the vocabulary are ignored.
    """
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-1.0 / np.sqrt(m0), 1.0 / np.sqrt(m0), size=(vocab.n_rows, m0))
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: header must be '<count> <dim>'")
        dim = int(header[1])
        if dim != m0:
            raise DataError(f"{path}: vector dimension {dim} does not match m0={m0}")
        for lineno, line in enumerate(f, 2):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected {dim} values")
            i = vocab.get(parts[0])
            if i is not None:
                emb[i] = np.array(parts[1:], dtype=np.float64)
    return emb


def write_word_vectors(f, vocab: Vocabulary, emb: np.ndarray) -> None:
    f.write(f"{vocab.size} {emb.shape[1]}\n")
    for i, w in enumerate(vocab.words):
        f.write(w + " " + " ".join(repr(float(x)) for x in emb[i]) + "\n")


# --- Rprop document fitting -------------------------------------------------


class Rprop:
    """Sign-based steps with per-component adaptive sizes (Rprop-, no
    weight backtracking). On a sign change the step shrinks and is still
    taken."""

    def __init__(self, shape, eta_plus: float = 1.2, eta_minus: float = 0.5, delta0: float = 0.1,
                 delta_min: float = 1e-6, delta_max: float = 50.0):
        self.eta_plus, self.eta_minus = eta_plus, eta_minus
        self.delta_min, self.delta_max = delta_min, delta_max
        self.delta = np.full(shape, float(delta0))
        self.prev_sign = np.zeros(shape)

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Increment to add to the parameters for a minimisation step."""
        sign = np.sign(grad)
        agree = sign * self.prev_sign
        self.delta = np.where(agree > 0, np.minimum(self.delta * self.eta_plus, self.delta_max),
                              np.where(agree < 0, np.maximum(self.delta * self.eta_minus, self.delta_min),
                                       self.delta))
        self.prev_sign = sign
        return -sign * self.delta


@dataclass
class DocFit:
    docvec: DocVector
    nll: float
    identity_nll: float
    iterations: int
    converged: bool
    empty: bool = False


def fit_doc_vector(doc, model: NeuralLM, mode: str, weights: np.ndarray, max_iter: int = 500,
                   tol: float = 1e-4, **rprop_kw) -> DocFit:
    """Fit a document vector by Rprop with the generic model frozen.

    Starts at the merge identity and stops once no component moves by
    ``tol`` or more. The best iterate seen is returned, so the fitted
    weighted NLL never exceeds the generic one.
    """
    ids = _ids(doc)
    dim = model.config.m_f
    dv = DocVector.identity(dim, mode)
    if not len(ids):
        log.warning("empty document %s: returning identity vector", getattr(doc, "doc_id", "?"))
        return DocFit(dv, 0.0, 0.0, 0, True, empty=True)
    s, _ = phi_forward(model.contexts(ids), model.params, model.config)
    w = weights[ids]
    hsm = model.params.hsm
    opt = Rprop(dim, **rprop_kw)
    z = dv.z.copy()
    best_z, best = z.copy(), math.inf
    identity_nll = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        cur = DocVector(z, mode)
        loss, _, gv, _ = hsm_backward(ids, psi_merge(s, cur), w, model.tree, hsm, need_nodes=False)
        if identity_nll is None:
            identity_nll = loss
        if loss < best:
            best, best_z = loss, z.copy()
        _, gz = merge_backward(gv, s, cur)
        delta = opt.step(gz)
        z = z + delta
        if np.max(np.abs(delta)) < tol:
            converged = True
            break
    final = hsm_backward(ids, psi_merge(s, DocVector(z, mode)), w, model.tree, hsm, need_nodes=False)[0]
    if final < best:
        best, best_z = final, z.copy()
    if not math.isfinite(best):
        raise NumericalError(f"non-finite document NLL for {getattr(doc, 'doc_id', '?')}")
    return DocFit(DocVector(best_z, mode), best, identity_nll, it, converged)
