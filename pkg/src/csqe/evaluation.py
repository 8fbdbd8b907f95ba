"""TREC-style evaluation: mAP, nDCG@k, Recall@k over run files and qrels.

Conventions match the classic trec_eval behavior: nDCG uses linear gain
grade/log2(rank+1) with the ideal ranking computed over all judged
documents (exponential gain is available behind a flag); mAP and recall
binarize at a configurable grade threshold; queries with no relevant
documents are excluded from macro averages.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

from .errors import DataFormatError

log = logging.getLogger(__name__)

DEFAULT_REL_THRESHOLD = 1
DEFAULT_RUN_DEPTH = 1000


@dataclass
class Qrels:
    """Graded relevance judgments: query id -> doc id -> grade (>= 0)."""

    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get(query_id, {}).get(doc_id, 0)

    def for_query(self, query_id: str) -> dict[str, int]:
        return self.judgments.get(query_id, {})


def _iter_lines(stream: Union[IO, Iterable]) -> Iterable[str]:
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def parse_qrels(stream: Union[IO, Iterable]) -> Qrels:
    """Parse ``qid 0 docid grade`` lines; later duplicates overwrite."""
    judgments: dict[str, dict[str, int]] = {}
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise DataFormatError(f"qrels line {lineno}: expected 4 fields, got {len(parts)}")
        qid, _iteration, docid, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise DataFormatError(f"qrels line {lineno}: grade '{grade_str}' is not an integer")
        if grade < 0:
            raise DataFormatError(f"qrels line {lineno}: grade must be >= 0")
        judgments.setdefault(qid, {})[docid] = grade
    return Qrels(judgments)


@dataclass
class RunFile:
    """Ranked retrieval output: query id -> ordered (doc id, score) list."""

    rankings: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


def write_trec_run(rankings: Mapping[str, Sequence[tuple[str, float]]], tag: str = "run") -> str:
    """Render rankings as ``qid Q0 docid rank score tag`` lines."""
    lines = []
    for qid in rankings:
        for rank, (docid, score) in enumerate(rankings[qid], start=1):
            lines.append(f"{qid} Q0 {docid} {rank} {score:.6f} {tag}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_trec_run(stream: Union[IO, Iterable]) -> RunFile:
    """Parse a TREC run file, re-sorting each query by score descending.

    The sort is stable so documents whose printed scores collide keep their
    file order; duplicate documents within a query are an error.
    """
    rankings: dict[str, list[tuple[str, float]]] = {}
    seen: dict[str, set] = {}
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise DataFormatError(f"run line {lineno}: expected 6 fields, got {len(parts)}")
        qid, _q0, docid, _rank, score_str, _tag = parts
        try:
            score = float(score_str)
        except ValueError:
            raise DataFormatError(f"run line {lineno}: score '{score_str}' is not a number")
        if docid in seen.setdefault(qid, set()):
            raise DataFormatError(f"run line {lineno}: duplicate doc '{docid}' for query '{qid}'")
        seen[qid].add(docid)
        rankings.setdefault(qid, []).append((docid, score))
    for qid in rankings:
        rankings[qid].sort(key=lambda pair: -pair[1])
    return RunFile(rankings)


# -- metrics ---------------------------------------------------------------


def ndcg_at_k(
    ranking: Sequence[str],
    judged: Mapping[str, int],
    k: int,
    exponential: bool = False,
) -> Optional[float]:
    """nDCG@k with linear gain by default; None when nothing is judged relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gain = (lambda g: float(2 ** g - 1)) if exponential else float
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    idcg = sum(gain(g) / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0.0:
        return None
    dcg = sum(
        gain(judged.get(d, 0)) / math.log2(i + 2) for i, d in enumerate(ranking[:k])
    )
    return dcg / idcg


def average_precision(
    ranking: Sequence[str],
    judged: Mapping[str, int],
    rel_threshold: int = DEFAULT_REL_THRESHOLD,
) -> Optional[float]:
    """AP with binary relevance grade >= rel_threshold; None when R == 0."""
    if rel_threshold < 1:
        raise ValueError("rel_threshold must be >= 1")
    relevant = {d for d, g in judged.items() if g >= rel_threshold}
    if not relevant:
        return None
    hits = 0
    total = 0.0
    for i, docid in enumerate(ranking, start=1):
        if docid in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def recall_at_k(
    ranking: Sequence[str],
    judged: Mapping[str, int],
    k: int,
    rel_threshold: int = DEFAULT_REL_THRESHOLD,
) -> Optional[float]:
    """Fraction of relevant documents in the top k; None when R == 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if rel_threshold < 1:
        raise ValueError("rel_threshold must be >= 1")
    relevant = {d for d, g in judged.items() if g >= rel_threshold}
    if not relevant:
        return None
    return len(relevant.intersection(ranking[:k])) / len(relevant)


# -- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    name: str
    kind: str  # map | ndcg | recall
    k: Optional[int] = None


def parse_metric_spec(spec: str) -> MetricSpec:
    """Accepts ``map``, ``ndcg_cut.K`` and ``recall.K``."""
    if spec == "map":
        return MetricSpec("map", "map")
    for prefix, kind in (("ndcg_cut.", "ndcg"), ("recall.", "recall")):
        if spec.startswith(prefix):
            try:
                k = int(spec[len(prefix):])
            except ValueError:
                raise ValueError(f"bad cutoff in metric spec '{spec}'")
            if k < 1:
                raise ValueError(f"cutoff must be >= 1 in metric spec '{spec}'")
            return MetricSpec(spec, kind, k)
    raise ValueError(f"unknown metric spec '{spec}' (try map, ndcg_cut.K, recall.K)")


@dataclass
class MetricReport:
    """Per-query metric values plus macro averages over evaluated queries."""

    per_query: dict[str, dict[str, float]]  # metric name -> qid -> value
    macro: dict[str, Optional[float]]
    skipped_queries: list[str]

    def evaluated_count(self, metric: str) -> int:
        return len(self.per_query.get(metric, {}))

    def to_json(self) -> str:
        payload = {
            "macro": self.macro,
            "per_query": self.per_query,
            "skipped_queries": self.skipped_queries,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def format_table(self) -> str:
        names = list(self.per_query)
        width = max([len(n) for n in names] + [6])
        lines = [f"{'metric'.ljust(width)}  {'queries':>7}  {'value':>8}"]
        for name in names:
            value = self.macro[name]
            rendered = f"{value:.4f}" if value is not None else "n/a"
            lines.append(f"{name.ljust(width)}  {self.evaluated_count(name):>7}  {rendered:>8}")
        return "\n".join(lines)


def evaluate_run(
    run: RunFile,
    qrels: Qrels,
    metric_specs: Sequence[Union[str, MetricSpec]],
    rel_threshold: int = DEFAULT_REL_THRESHOLD,
    exponential_gain: bool = False,
) -> MetricReport:
    """Score every run query found in the qrels.

    Queries missing from the qrels are skipped with a warning; queries with
    no relevant documents are excluded per metric. Output ordering is by
    query id, so reports are deterministic.
    """
    specs = [parse_metric_spec(s) if isinstance(s, str) else s for s in metric_specs]
    per_query: dict[str, dict[str, float]] = {spec.name: {} for spec in specs}
    skipped: list[str] = []
    for qid in sorted(run.rankings):
        judged = qrels.judgments.get(qid)
        if judged is None:
            log.warning("query %s has no qrels entry; skipped", qid)
            skipped.append(qid)
            continue
        ranking = [docid for docid, _score in run.rankings[qid]]
        for spec in specs:
            if spec.kind == "map":
                value = average_precision(ranking, judged, rel_threshold)
            elif spec.kind == "ndcg":
                value = ndcg_at_k(ranking, judged, spec.k, exponential=exponential_gain)
            else:
                value = recall_at_k(ranking, judged, spec.k, rel_threshold)
            if value is not None:
                per_query[spec.name][qid] = value
    macro: dict[str, Optional[float]] = {}
    for spec in specs:
        values = per_query[spec.name]
        macro[spec.name] = sum(values.values()) / len(values) if values else None
    if not any(per_query.values()):
        log.warning("no queries were evaluated (empty run or disjoint qrels)")
    return MetricReport(per_query=per_query, macro=macro, skipped_queries=skipped)
