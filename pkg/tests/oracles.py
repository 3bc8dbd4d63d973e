"""Slow reference implementations used as test oracles."""

from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import expit


@lru_cache(maxsize=None)
def optimal_code_cost(weights: tuple) -> int:
    """Minimum weighted path length over every full binary tree whose
    leaves carry ``weights`` (sorted tuple), by exhaustive splitting."""
    if len(weights) == 1:
        return 0
    best = None
    n = len(weights)
    seen = set()
    for r in range(1, n // 2 + 1):
        for left in combinations(range(n), r):
            lw = tuple(weights[i] for i in left)
            if lw in seen:
                continue
            seen.add(lw)
            rw = tuple(w for i, w in enumerate(weights) if i not in left)
            cost = optimal_code_cost(lw) + optimal_code_cost(rw)
            best = cost if best is None else min(best, cost)
    return best + sum(weights)


def average_precision(ranking, relevant):
    """AP from precision at every cutoff: sum_k P@k * rel_k / |R|."""
    total = 0.0
    for k in range(1, len(ranking) + 1):
        if ranking[k - 1] in relevant:
            prefix = ranking[:k]
            total += sum(1 for d in prefix if d in relevant) / k
    return total / len(relevant)


def next_token_prob(context, target, params, config, tree, z=None, mode=None):
    """Direct per-context evaluation of the model, one loop per layer."""
    l1 = params.b.copy()
    for j, tok in enumerate(context):
        l1 = l1 + params.A[j] @ params.embeddings[tok]
    if config.arch == "M1":
        s = np.tanh(l1)
    elif config.arch == "M2":
        s = np.tanh(params.B @ np.tanh(l1))
    else:
        pooled = np.array([max(l1[i:i + config.kappa]) for i in range(0, len(l1), config.kappa)])
        s = np.tanh(params.B @ pooled)
    if z is not None:
        s = s + z if mode == "sum" else s * z
    p = 1.0
    nodes, signs = tree.path(target)
    for node, sign in zip(nodes, signs):
        p *= expit(-sign * params.hsm[node] @ s)
    return p
