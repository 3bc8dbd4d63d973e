"""Neural-network language models for ad-hoc retrieval.

A feed-forward n-gram model over a hierarchical softmax, optionally adapted
to each document through a small vector merged into the context state, and
mixed with a smoothed unigram model to rerank BM25 candidates.
"""

from .corpus import Document, Vocabulary, build_vocabulary, tokenize
from .errors import DataError, NumericalError
from .evaluation import average_precision, delta_report, evaluate_run, map_gmap
from .huffman import HuffmanTree, build_huffman
from .nnlm import DocVector, NeuralConfig, NeuralLM, NeuralParams, init_params, param_counts
from .rerank import MixParams, rerank_run, sweep_lambda
from .training import TrainConfig, fit_doc_vector, perplexity, train_generic

__version__ = "0.1.0"

__all__ = [
    "DataError", "DocVector", "Document", "HuffmanTree", "MixParams", "NeuralConfig", "NeuralLM",
    "NeuralParams", "NumericalError", "TrainConfig", "Vocabulary", "average_precision", "build_huffman",
    "build_vocabulary", "delta_report", "evaluate_run", "fit_doc_vector", "init_params", "map_gmap",
    "param_counts", "perplexity", "rerank_run", "sweep_lambda", "tokenize", "train_generic",
]
