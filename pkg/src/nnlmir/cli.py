"""Command-line pipeline.

Every command reads its inputs, validates its configuration, computes, and
only then writes its outputs under ``--out`` (via temp file + rename).
Defaults may come from a ``key = value`` config file given by ``--config``
or the ``NNLMIR_CONFIG`` environment variable; flags override it.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import synthetic
from .baseline import InvertedIndex, build_index, read_index, retrieve_topk, write_index
from .checkpoint import load_model, read_checkpoint, save_model, write_checkpoint
from .corpus import (
    Document,
    Vocabulary,
    build_vocabulary,
    encode_documents,
    load_corpus,
    load_stopwords,
    read_topics,
    read_vocabulary,
    write_vocabulary,
)
from .errors import DataError, NumericalError
from .evaluation import (
    EvalReport,
    evaluate_run,
    format_table,
    read_qrels,
    read_run,
    report_records,
    write_run,
)
from .gradcheck import gradient_check
from .huffman import build_huffman
from .nnlm import ARCHS, MODES, DocVector, NeuralConfig, NeuralLM, init_params, param_counts
from .rerank import MixParams, encode_query, rerank_jm, rerank_run, run_tag
from .training import (
    TrainConfig,
    fit_doc_vector,
    perplexity,
    pretrain_embeddings,
    read_word_vectors,
    train_generic,
    word_weights,
    write_word_vectors,
)

log = logging.getLogger("nnlmir")

ENV_CONFIG = "NNLMIR_CONFIG"
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    corpus: Optional[Path] = None
    vocab: Optional[Path] = None
    index: Optional[Path] = None
    model: Optional[Path] = None
    docvecs: list[Path] = field(default_factory=list)
    topics: Optional[Path] = None
    qrels: Optional[Path] = None
    out: Path = Path(".")
    neural: NeuralConfig = field(default_factory=NeuralConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mix: MixParams = field(default_factory=lambda: MixParams(0.01, 0.5))
    lambdas: list[float] = field(default_factory=lambda: [0.0, 0.01, 0.1, 0.5, 1.0])
    seed: int = 0


# --- helpers -----------------------------------------------------------------


@contextmanager
def atomic_write(path: Path, mode: str = "w"):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8"})) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()] if text else []


def _paths(text: str) -> list[Path]:
    return [Path(x) for x in text.split(",") if x.strip()] if text else []


def _require(args, *names: str) -> None:
    for name in names:
        value = getattr(args, name, None)
        if value in (None, "", []):
            raise UsageError(f"--{name.replace('_', '-')} is required for '{args.command}'")
        for p in value if isinstance(value, list) else [value]:
            if not Path(p).exists():
                raise UsageError(f"--{name.replace('_', '-')}: {p} does not exist")


def _config(args) -> ExperimentConfig:
    try:
        neural = NeuralConfig(arch="M2" if args.arch == "all" else args.arch, n=args.n, m0=args.m0, m1=args.m1, m2=args.m2, kappa=args.kappa)
        train = TrainConfig(lr0=args.lr0, decay=args.decay, batch_size=args.batch_size, max_iters=args.steps,
                            subsample=args.subsample, seed=args.seed, log_every=args.log_every)
        mix = MixParams(args.lam, args.gamma)
        for lam in args.lambdas:
            MixParams(lam, args.gamma)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return ExperimentConfig(
        corpus=args.corpus, vocab=args.vocab if args.command != "gradcheck" else None, index=args.index, model=args.model, docvecs=args.docvecs,
        topics=args.topics, qrels=args.qrels, out=args.out, neural=neural, train=train, mix=mix,
        lambdas=args.lambdas, seed=args.seed,
    )


def _stopwords(args):
    return load_stopwords(args.stopwords) if args.stopwords else None


def _load_docs(args) -> list[Document]:
    return load_corpus(args.corpus, _stopwords(args), args.format)


def _load_model(path: Path, vocab: Vocabulary) -> NeuralLM:
    config, params = load_model(path)
    if vocab.size < 2:
        raise DataError("neural vocabulary needs at least two words")
    try:
        params.check_shapes(config, vocab.size)
    except ValueError as e:
        raise DataError(f"{path}: does not match vocabulary ({e})") from e
    return NeuralLM(config, params, build_huffman(vocab.frequencies))


def _load_docvecs(paths: list[Path]) -> list[dict[str, DocVector]]:
    tables = []
    for p in paths:
        _, _, found = read_checkpoint(p)
        if not found:
            raise DataError(f"{p}: no document-vector table")
        tables.extend(found.values())
    return tables


def _queries(args, index: InvertedIndex, vocab: Optional[Vocabulary]):
    topics = read_topics(args.topics, _stopwords(args))
    return {t: encode_query(t, toks, index, vocab) for t, toks in topics.items()}


def _candidates(queries, index: InvertedIndex, k: int):
    return {t: retrieve_topk(list(q.coll_ids), index, k) for t, q in queries.items()}


def _model_name(args, model: NeuralLM) -> str:
    return args.name or model.config.arch


# --- commands ----------------------------------------------------------------


def cmd_synth(args, cfg: ExperimentConfig) -> None:
    col = synthetic.generate(synthetic.SyntheticConfig(seed=args.seed))
    tmp = Path(tempfile.mkdtemp(dir=cfg.out if cfg.out.exists() else None))
    try:
        written = col.write(tmp)
        cfg.out.mkdir(parents=True, exist_ok=True)
        for name, p in written.items():
            os.replace(p, cfg.out / p.name)
    finally:
        for p in tmp.glob("*"):
            p.unlink()
        tmp.rmdir()
    print(f"{len(col.docs)} documents, {len(col.topics)} topics -> {cfg.out}")


def cmd_build_vocab(args, cfg: ExperimentConfig) -> None:
    _require(args, "corpus")
    if args.min_count < 1:
        raise UsageError("--min-count must be >= 1")
    vocab = build_vocabulary(_load_docs(args), args.min_count)
    with atomic_write(cfg.out / "vocab.tsv") as f:
        write_vocabulary(vocab, f)
    print(f"{vocab.size} stems (min_count={vocab.min_count}) -> {cfg.out / 'vocab.tsv'}")


def cmd_build_index(args, cfg: ExperimentConfig) -> None:
    _require(args, "corpus")
    docs = _load_docs(args)
    if not docs:
        raise DataError("empty corpus")
    index = build_index(docs)
    with atomic_write(cfg.out / "index.bin", "wb") as f:
        write_index(index, f)
    print(f"{index.N} documents, {len(index.terms)} terms -> {cfg.out / 'index.bin'}")


def cmd_pretrain(args, cfg: ExperimentConfig) -> None:
    _require(args, "vocab")
    vocab = read_vocabulary(cfg.vocab)
    tree = build_huffman(vocab.frequencies)
    m0 = cfg.neural.m0
    if args.vectors:
        _require(args, "vectors")
        emb = read_word_vectors(args.vectors, vocab, m0, seed=cfg.seed)
        hsm = np.zeros((vocab.size - 1, m0))
    else:
        _require(args, "corpus")
        docs = encode_documents(_load_docs(args), vocab)
        emb, hsm = pretrain_embeddings(docs, tree, m0, window=args.window, epochs=args.epochs,
                                       lr0=args.pretrain_lr, seed=cfg.seed)
    with atomic_write(cfg.out / "pretrained.ckpt", "wb") as f:
        write_checkpoint(f, None, {"embeddings": emb, "hsm": hsm})
    with atomic_write(cfg.out / "vectors.txt") as f:
        write_word_vectors(f, vocab, emb)
    print(f"embeddings {emb.shape} -> {cfg.out / 'pretrained.ckpt'}")


def cmd_train_lm(args, cfg: ExperimentConfig) -> None:
    _require(args, "corpus", "vocab")
    if args.init:
        _require(args, "init")
    vocab = read_vocabulary(cfg.vocab)
    if vocab.size < 2:
        raise DataError("neural vocabulary needs at least two words")
    docs = encode_documents(_load_docs(args), vocab)
    tree = build_huffman(vocab.frequencies)
    params = init_params(cfg.neural, vocab.size, seed=cfg.seed)
    if args.init:
        _, tensors, _ = read_checkpoint(args.init)
        for name in ("embeddings", "hsm"):
            if name not in tensors:
                continue
            if tensors[name].shape != getattr(params, name).shape:
                if name == "hsm":
                    log.warning("pretrained HSM vectors have dim %d != m_f=%d; not used",
                                tensors[name].shape[1], cfg.neural.m_f)
                    continue
                raise DataError(f"{args.init}: {name} shape {tensors[name].shape} "
                                f"!= expected {getattr(params, name).shape}")
            setattr(params, name, tensors[name].copy())
    model = NeuralLM(cfg.neural, params, tree)
    weights = word_weights(vocab, cfg.train.subsample)
    ppl0 = perplexity(docs, model, weights)
    trained, trace = train_generic(docs, model, cfg.train, weights,
                                   callback=lambda r: log.info("step %(step)d lr %(lr).4g ppl %(perplexity).3f", r))
    ppl = perplexity(docs, trained, weights)
    name = args.name or cfg.neural.arch
    with atomic_write(cfg.out / f"{name}.ckpt", "wb") as f:
        save_model(f, cfg.neural, trained.params)
    with atomic_write(cfg.out / f"{name}.train.jsonl") as f:
        for rec in trace:
            f.write(json.dumps(rec) + "\n")
    print(f"{name}: weighted perplexity {ppl0:.3f} -> {ppl:.3f} -> {cfg.out / (name + '.ckpt')}")


def cmd_fit_docvecs(args, cfg: ExperimentConfig) -> None:
    _require(args, "corpus", "vocab", "model")
    if args.mode not in MODES:
        raise UsageError(f"--mode must be one of {MODES}")
    vocab = read_vocabulary(cfg.vocab)
    model = _load_model(cfg.model, vocab)
    docs = {d.doc_id: d for d in encode_documents(_load_docs(args), vocab)}
    if args.all_docs:
        targets = sorted(docs)
    else:
        _require(args, "index", "topics")
        index = read_index(cfg.index)
        cands = _candidates(_queries(args, index, None), index, args.k)
        targets = sorted({d for c in cands.values() for d, _ in c})
    missing = [d for d in targets if d not in docs]
    if missing:
        raise DataError(f"candidates missing from corpus: {missing[:5]}")
    weights = word_weights(vocab, cfg.train.subsample)

    def fit(doc_id):
        return fit_doc_vector(docs[doc_id], model, args.mode, weights, max_iter=args.max_iter, tol=args.tol)

    if args.threads > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            fits = list(pool.map(fit, targets))
    else:
        fits = [fit(d) for d in targets]
    table = {d: f.docvec for d, f in zip(targets, fits)}
    improved = sum(f.nll < f.identity_nll for f in fits)
    name = f"{_model_name(args, model)}-{args.mode}"
    with atomic_write(cfg.out / f"{name}.docvecs", "wb") as f:
        write_checkpoint(f, None, None, {args.mode: table})
    print(f"{len(table)} document vectors ({args.mode}); likelihood improved for {improved} "
          f"-> {cfg.out / (name + '.docvecs')}")


def cmd_rerank(args, cfg: ExperimentConfig) -> None:
    _require(args, "index", "topics")
    index = read_index(cfg.index)
    vocab, model = None, None
    if cfg.mix.lam > 0.0:
        _require(args, "vocab", "model")
        vocab = read_vocabulary(cfg.vocab)
        model = _load_model(cfg.model, vocab)
    tables = _load_docvecs(cfg.docvecs) if cfg.docvecs else [None]
    if len(tables) > 1:
        raise UsageError("rerank takes a single --docvecs table")
    docvecs = tables[0]
    queries = _queries(args, index, vocab)
    cands = _candidates(queries, index, args.k)
    run = rerank_run(cands, queries, cfg.mix, index, model, docvecs)
    mode = next(iter(docvecs.values())).mode if docvecs else None
    tag = run_tag(_model_name(args, model) if model else "LM", mode, cfg.mix.lam, cfg.mix.gamma)
    with atomic_write(cfg.out / f"{tag}.run") as f:
        write_run(f, run, tag)
    print(f"{tag}: {len(run)} topics -> {cfg.out / (tag + '.run')}")


def cmd_evaluate(args, cfg: ExperimentConfig) -> None:
    _require(args, "qrels", "run")
    qrels = read_qrels(cfg.qrels)
    reports = []
    for p in args.run:
        run, tag = read_run(p)
        reports.append(evaluate_run(run, qrels, tag or Path(p).stem))
    lines = ["run\tMAP\tGMAP"] + [f"{r.name}\t{r.map:.4f}\t{r.gmap:.4f}" for r in reports]
    with atomic_write(cfg.out / "eval.tsv") as f:
        f.write("\n".join(lines) + "\n")
    with atomic_write(cfg.out / "eval.jsonl") as f:
        for r in reports:
            f.write(json.dumps({"run": r.name, "map": r.map, "gmap": r.gmap, "ap": r.per_topic}) + "\n")
    print("\n".join(lines))


MODE_SUFFIX = {None: "#", "sum": "+", "product": "*"}


def cmd_sweep(args, cfg: ExperimentConfig) -> None:
    _require(args, "index", "topics", "qrels")
    index = read_index(cfg.index)
    qrels = read_qrels(cfg.qrels)
    vocab, model = None, None
    if args.model:
        _require(args, "vocab", "model")
        vocab = read_vocabulary(cfg.vocab)
        model = _load_model(cfg.model, vocab)
    tables = _load_docvecs(cfg.docvecs) if cfg.docvecs else []
    queries = _queries(args, index, vocab)
    cands = _candidates(queries, index, args.k)
    coll_lm = index.collection_lm()

    runs: dict[str, dict] = {}
    results: dict[str, dict[float, Optional[EvalReport]]] = {}
    bm25 = evaluate_run(cands, qrels, "BM25")
    runs["BM25"] = cands
    results["BM25"] = {lam: bm25 for lam in cfg.lambdas}
    lm_tag = f"LM-g{cfg.mix.gamma:g}"
    runs[lm_tag] = rerank_jm(cands, queries, cfg.mix.gamma, index, coll_lm)
    lm = evaluate_run(runs[lm_tag], qrels, lm_tag)
    results["LM"] = {lam: lm for lam in cfg.lambdas}
    if model is not None:
        name = _model_name(args, model)
        variants = [None] + tables
        for docvecs in variants:
            mode = next(iter(docvecs.values())).mode if docvecs else None
            row = name + MODE_SUFFIX[mode]
            results[row] = {}
            for lam in cfg.lambdas:
                tag = run_tag(name, mode, lam, cfg.mix.gamma)
                try:
                    run = rerank_run(cands, queries, MixParams(lam, cfg.mix.gamma), index, model, docvecs, coll_lm)
                    rep = evaluate_run(run, qrels, tag)
                    if not all(math.isfinite(s) for r in run.values() for _, s in r):
                        log.warning("%s: non-finite scores", tag)
                except (DataError, NumericalError, FloatingPointError) as e:
                    log.error("%s failed: %s", tag, e)
                    results[row][lam] = None
                    continue
                runs[tag] = run
                results[row][lam] = rep
    table = format_table(results, cfg.lambdas)
    records = report_records(results, cfg.lambdas)
    for tag, run in runs.items():
        with atomic_write(cfg.out / "runs" / f"{tag}.run") as f:
            write_run(f, run, tag)
    with atomic_write(cfg.out / "sweep.tsv") as f:
        f.write(table)
    with atomic_write(cfg.out / "sweep.jsonl") as f:
        f.write("\n".join(records) + "\n")
    print(table, end="")


def cmd_gradcheck(args, cfg: ExperimentConfig) -> None:
    archs = ARCHS if args.arch in (None, "all") else (args.arch,)
    worst = 0.0
    for arch in archs:
        for mode in (None,) + MODES:
            errs = gradient_check(arch, mode, vocab=args.vocab, dims=args.dims, seed=args.seed)
            err = max(errs.values())
            worst = max(worst, err)
            print(f"{arch:6s} {mode or 'generic':8s} max relative error {err:.3e}")
    print(f"worst {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    if not worst < GRADCHECK_TOL:
        raise NumericalError(f"gradient check failed: {worst:.3e} >= {GRADCHECK_TOL:g}")


def cmd_paramcount(args, cfg: ExperimentConfig) -> None:
    if args.vocab_size is None:
        raise UsageError("--vocab-size is required for 'paramcount'")
    archs = ARCHS if args.arch == "all" else (args.arch,)
    print("model\tphi\tword/HSM")
    for arch in archs:
        try:
            nc = NeuralConfig(arch=arch, n=args.n, m0=args.m0, m1=args.m1, m2=args.m2, kappa=args.kappa)
        except ValueError as e:
            raise UsageError(str(e)) from e
        c = param_counts(nc, args.vocab_size)
        print(f"{arch}\t{c['phi']:,}\t{c['word_hsm']:,}")


COMMANDS = {
    "synth": (cmd_synth, "write the bundled synthetic collection (corpus, topics, qrels)"),
    "build-vocab": (cmd_build_vocab, "build the neural vocabulary"),
    "build-index": (cmd_build_index, "build the BM25 inverted index"),
    "pretrain": (cmd_pretrain, "CBOW pretraining of embeddings and HSM vectors, or load text vectors"),
    "train-lm": (cmd_train_lm, "train the generic neural language model"),
    "fit-docvecs": (cmd_fit_docvecs, "fit per-document vectors with Rprop"),
    "rerank": (cmd_rerank, "rerank BM25 candidates with the mixed score"),
    "evaluate": (cmd_evaluate, "MAP/GMAP of run files"),
    "sweep": (cmd_sweep, "rerank and evaluate over a list of lambdas"),
    "gradcheck": (cmd_gradcheck, "finite-difference gradient check"),
    "paramcount": (cmd_paramcount, "parameter counts of the three models"),
}


# --- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser, command: str) -> None:
    g = p.add_argument_group("paths")
    g.add_argument("--corpus", type=Path)
    g.add_argument("--format", choices=["jsonl", "trec"])
    g.add_argument("--stopwords", type=Path)
    if command == "gradcheck":
        g.add_argument("--vocab", type=int, default=20, help="vocabulary size of the test model")
    else:
        g.add_argument("--vocab", type=Path)
    g.add_argument("--index", type=Path)
    g.add_argument("--model", type=Path)
    g.add_argument("--init", type=Path, help="checkpoint with pretrained embeddings/HSM vectors")
    g.add_argument("--vectors", type=Path, help="external word vectors (text format)")
    g.add_argument("--docvecs", type=_paths, default=[], help="comma-separated document-vector files")
    g.add_argument("--topics", type=Path)
    g.add_argument("--qrels", type=Path)
    g.add_argument("--run", type=_paths, default=[], help="comma-separated run files")
    g.add_argument("--out", type=Path, default=Path("."))
    g.add_argument("--name", help="model name used in file names and run tags")

    g = p.add_argument_group("model")
    multi = command in ("gradcheck", "paramcount")
    g.add_argument("--arch", default="all" if multi else "M2", choices=list(ARCHS) + (["all"] if multi else []))
    g.add_argument("--n", type=int, default=5, help="model order (context length + 1)")
    g.add_argument("--m0", type=int, default=100)
    g.add_argument("--m1", type=int, default=100)
    g.add_argument("--m2", type=int, default=100)
    g.add_argument("--kappa", type=int, default=4)
    g.add_argument("--dims", type=int, default=4, help="gradcheck: every hidden size")
    g.add_argument("--vocab-size", type=int)

    g = p.add_argument_group("training")
    g.add_argument("--min-count", type=int, default=5)
    g.add_argument("--lr0", type=float, default=0.1)
    g.add_argument("--decay", type=float, default=2e-4)
    g.add_argument("--batch-size", type=int, default=100)
    g.add_argument("--steps", type=int, default=50_000)
    g.add_argument("--subsample", type=float, default=1e-3)
    g.add_argument("--log-every", type=int, default=100)
    g.add_argument("--window", type=int, default=5)
    g.add_argument("--epochs", type=int, default=5)
    g.add_argument("--pretrain-lr", type=float, default=0.5)
    g.add_argument("--mode", choices=list(MODES), default="product")
    g.add_argument("--max-iter", type=int, default=500)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--all-docs", action="store_true", help="fit every document, not only candidates")

    g = p.add_argument_group("retrieval")
    g.add_argument("--k", type=int, default=100)
    g.add_argument("--lambda", dest="lam", type=float, default=0.01)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--lambdas", type=_floats, default=[0.0, 0.01, 0.1, 0.5, 1.0])

    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", type=Path, help=f"key = value defaults (or ${ENV_CONFIG})")
    p.add_argument("-v", "--verbose", action="store_true")


def read_config_file(path: Path) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string("[nnlmir]\n" + Path(path).read_text(encoding="utf-8"))
    except (OSError, configparser.Error) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    return {k.replace("-", "_"): v for k, v in cp["nnlmir"].items()}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nnlmir", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        _add_common(sub.add_parser(name, help=help_, description=help_), name)
    return parser


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    config_path = known.config or (Path(os.environ[ENV_CONFIG]) if os.environ.get(ENV_CONFIG) else None)
    if config_path is not None:
        values = read_config_file(config_path)
        alias = {"lambda": "lam"}
        for sp in parser._subparsers._group_actions[0].choices.values():
            dests = {a.dest for a in sp._actions}
            unknown = {alias.get(k, k) for k in values} - dests
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
            sp.set_defaults(**{alias.get(k, k): v for k, v in values.items()})
    return parser.parse_args(argv)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        COMMANDS[args.command][0](args, cfg)
    except UsageError as e:
        print(f"nnlmir: usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    except NumericalError as e:
        print(f"nnlmir: numerical failure: {e}", file=sys.stderr)
        return 3
    except (DataError, OSError, KeyError, ValueError) as e:
        print(f"nnlmir: data error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
