#!/usr/bin/env python3
"""Parameter counts of the three context networks at the reference sizes
(4 context words, 100-dimensional layers, pooling width 4, 375,219 words)."""

import argparse

from nnlmir.nnlm import ARCHS, NeuralConfig, param_counts


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--vocab-size", type=int, default=375_219)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--kappa", type=int, default=4)
    args = p.parse_args()
    print(f"{'model':6s} {'phi':>10s} {'bias':>6s} {'word/HSM':>12s} {'total':>12s}")
    for arch in ARCHS:
        c = param_counts(NeuralConfig(arch, args.n, args.dim, args.dim, args.dim, args.kappa), args.vocab_size)
        print(f"{arch:6s} {c['phi']:>10,} {c['bias']:>6,} {c['word_hsm']:>12,} {c['total']:>12,}")


if __name__ == "__main__":
    main()
