"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .huffman import build_huffman
from .nnlm import (
    DocVector,
    NeuralConfig,
    SparseRows,
    backward,
    init_params,
    make_contexts,
)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def gradient_check(arch: str = "M2", mode: Optional[str] = None, vocab: int = 20, dims: int = 4,
                   seed: int = 7, h: float = 1e-4, n: int = 5, kappa: int = 4,
                   positions: int = 30) -> dict[str, float]:
    """Per-tensor relative error ``|g_a - g_fd| / max(|g_a|, |g_fd|)``.

    Builds a random model (all tensors non-zero, HSM nodes included) with
    ``vocab`` words and every hidden size equal to ``dims``, then compares
    the analytic gradient of the weighted NLL of a random sequence against
    central differences with step ``h``.
    """
    rng = np.random.default_rng(seed)
    config = NeuralConfig(arch=arch, n=n, m0=dims, m1=dims, m2=dims, kappa=kappa)
    tree = build_huffman(rng.integers(1, 50, size=vocab))
    params = init_params(config, vocab, seed=seed)
    params.b[:] = rng.normal(scale=0.3, size=params.b.shape)
    params.hsm[:] = rng.normal(scale=0.5, size=params.hsm.shape)
    seq = rng.integers(0, vocab, size=positions)
    ctx = make_contexts(seq, config.context_size, vocab)
    weights = rng.uniform(0.2, 1.0, size=positions)
    docvec = None
    if mode is not None:
        base = 0.0 if mode == "sum" else 1.0
        docvec = DocVector(base + rng.normal(scale=0.3, size=config.m_f), mode)

    def loss_at() -> float:
        return backward(ctx, seq, weights, params, config, tree, docvec, wrt=())[0]

    _, grads = backward(ctx, seq, weights, params, config, tree, docvec)
    targets = dict(params.tensors())
    if docvec is not None:
        targets["z"] = docvec.z
    errors = {}
    for name, tensor in targets.items():
        g = grads[name]
        analytic = g.dense(tensor.shape[0]) if isinstance(g, SparseRows) else g
        numeric = np.zeros_like(tensor)
        flat, nflat = tensor.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_at()
            flat[i] = old - h
            down = loss_at()
            flat[i] = old
            nflat[i] = (up - down) / (2 * h)
        errors[name] = relative_error(analytic, numeric)
    return errors
