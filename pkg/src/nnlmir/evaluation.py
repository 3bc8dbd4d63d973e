"""TREC-style run/qrels IO and MAP/GMAP evaluation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import DataError

log = logging.getLogger(__name__)

GMAP_EPS = 1e-5

Qrels = dict[str, set[str]]
Run = dict[str, list[tuple[str, float]]]


def read_qrels(path: str | Path) -> Qrels:
    """``topic 0 docid rel`` lines; grade >= 1 counts as relevant."""
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 'topic iter docid rel'")
            topic, _, doc_id, rel = parts
            try:
                grade = int(rel)
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: relevance {rel!r} is not an integer") from e
            rels = qrels.setdefault(topic, set())
            if grade >= 1:
                rels.add(doc_id)
    return qrels


def write_qrels(f, qrels: Mapping[str, set[str]]) -> None:
    for topic in qrels:
        for doc_id in sorted(qrels[topic]):
            f.write(f"{topic} 0 {doc_id} 1\n")


def read_run(path: str | Path) -> tuple[Run, Optional[str]]:
    """Returns the run (ordered by the rank column) and its tag."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    tag = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 'topic Q0 docid rank score tag'")
            topic, _, doc_id, rank, score, tag = parts
            try:
                rows.setdefault(topic, []).append((int(rank), doc_id, float(score)))
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: bad rank or score") from e
    run = {t: [(d, s) for _, d, s in sorted(r)] for t, r in rows.items()}
    return run, tag


def write_run(f, run: Mapping[str, Sequence[tuple[str, float]]], tag: str) -> None:
    for topic, ranking in run.items():
        for rank, (doc_id, score) in enumerate(ranking, 1):
            f.write(f"{topic} Q0 {doc_id} {rank} {score!r} {tag}\n")


def average_precision(ranking: Sequence[str], relevant: set[str]) -> float:
    """Mean precision at the rank of each relevant document; unretrieved
    relevant documents count as zero."""
    if not relevant:
        raise ValueError("average precision is undefined without relevant documents")
    hits, total = 0, 0.0
    for k, doc_id in enumerate(ranking, 1):
        if doc_id in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def map_gmap(aps: Sequence[float], eps: float = GMAP_EPS) -> tuple[float, float]:
    if not aps:
        raise ValueError("no topics to average")
    mean = sum(aps) / len(aps)
    gmean = math.exp(sum(math.log(max(ap, eps)) for ap in aps) / len(aps))
    return mean, gmean


@dataclass
class EvalReport:
    name: str
    per_topic: dict[str, float] = field(default_factory=dict)
    map: float = math.nan
    gmap: float = math.nan


def evaluate_run(run: Mapping[str, Sequence[tuple[str, float]]], qrels: Qrels, name: str = "run") -> EvalReport:
    """AP for every judged topic with at least one relevant document.

    Topics absent from the run score 0; topics without relevant documents
    are skipped with a warning.
    """
    per_topic = {}
    for topic, rel in qrels.items():
        if not rel:
            log.warning("topic %s has no relevant documents; excluded", topic)
            continue
        per_topic[topic] = average_precision([d for d, _ in run.get(topic, ())], rel)
    mean, gmean = map_gmap(list(per_topic.values()))
    return EvalReport(name, per_topic, mean, gmean)


def delta_report(ap_specific: Mapping[str, float], ap_generic: Mapping[str, float]) -> float:
    """Mean per-topic AP difference, specific minus generic."""
    if set(ap_specific) != set(ap_generic):
        diff = sorted(set(ap_specific) ^ set(ap_generic))
        raise ValueError(f"topic sets differ: {diff}")
    if not ap_specific:
        raise ValueError("no topics")
    return sum(ap_specific[t] - ap_generic[t] for t in ap_specific) / len(ap_specific)


def _cell(x: Optional[float]) -> str:
    return "nan" if x is None or math.isnan(x) else f"{x:.4f}"


def format_table(results: Mapping[str, Mapping[float, Optional[EvalReport]]], lambdas: Sequence[float]) -> str:
    """Rows are models, columns MAP and GMAP per lambda. Missing or failed
    cells print as ``nan`` and the row is kept."""
    head = ["model"] + [f"MAP@{lam:g}" for lam in lambdas] + [f"GMAP@{lam:g}" for lam in lambdas]
    lines = ["\t".join(head)]
    for model, by_lam in results.items():
        maps = [_cell(by_lam.get(lam).map if by_lam.get(lam) else None) for lam in lambdas]
        gmaps = [_cell(by_lam.get(lam).gmap if by_lam.get(lam) else None) for lam in lambdas]
        lines.append("\t".join([model] + maps + gmaps))
    return "\n".join(lines) + "\n"


def report_records(results: Mapping[str, Mapping[float, Optional[EvalReport]]], lambdas: Sequence[float]) -> list[str]:
    """One JSON line per (model, lambda); failures carry null metrics."""
    out = []
    for model, by_lam in results.items():
        for lam in lambdas:
            rep = by_lam.get(lam)
            ok = rep is not None and not math.isnan(rep.map)
            out.append(json.dumps({
                "model": model, "lambda": lam,
                "map": rep.map if ok else None, "gmap": rep.gmap if ok else None,
                "status": "ok" if ok else "failed",
            }))
    return out
