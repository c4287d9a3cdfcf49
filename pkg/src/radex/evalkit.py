"""Scoring of extracted terms against gold annotations.

Every system output and every gold term list is reduced to a lowercase word
sequence before scoring. A report with no prediction is scored as if the
system had answered ``normal``.

Metrics:

* BLEU-1..4, cumulative, unsmoothed, one score per report, averaged.
* Micro precision/recall/F1 over per-report word multisets.
* Per-pathology precision/recall/F1 where each report is one binary decision.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from radex.corpus import Corpus
from radex.errors import (
    EmptyGold,
    EmptyPathologyList,
    EmptyReference,
    InvalidOrder,
    ParseError,
)
from radex.textprep import normalize_terms

FALLBACK = "normal"

# Benchmark vocabulary; the source list repeats "consolidation", kept once here.
DEFAULT_PATHOLOGIES = (
    "opacity", "aorta", "fractures", "osteophyte", "scoliosis", "density",
    "pneumothorax", "cardiomegaly", "emphysema", "arthritis", "granuloma",
    "kyphosis", "pneumonia", "spondylosis", "deformity", "hypertension",
    "consolidation", "mass", "thickening", "hernia", "lucency", "bronchiectasis",
)


@dataclass
class PredictionSet:
    system_name: str
    predictions: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for rid in self.predictions:
            if not isinstance(rid, str) or not rid:
                raise ValueError("prediction ids must be non-empty strings")

    def get(self, report_id: str) -> list[str]:
        return self.predictions.get(report_id, [])

    def __len__(self) -> int:
        return len(self.predictions)


def dump_predictions_jsonl(preds: PredictionSet) -> str:
    return "".join(
        json.dumps({"id": rid, "terms": list(terms)}, ensure_ascii=False) + "\n"
        for rid, terms in preds.predictions.items()
    )


def save_predictions_jsonl(preds: PredictionSet, path: str | Path) -> None:
    Path(path).write_text(dump_predictions_jsonl(preds), encoding="utf-8", newline="\n")


def load_predictions_jsonl(path: str | Path, system_name: str | None = None) -> PredictionSet:
    path = Path(path)
    predictions: dict[str, list[str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ParseError(lineno, "record is not a JSON object")
            rid, terms = record.get("id"), record.get("terms", [])
            if not isinstance(rid, str) or not rid:
                raise ParseError(lineno, "missing or empty 'id'")
            if terms is None:
                terms = []
            if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
                raise ParseError(lineno, "'terms' must be a list of strings")
            predictions.setdefault(rid, []).extend(terms)
    return PredictionSet(system_name or path.stem, predictions)


def apply_fallback(terms: Sequence[str] | None) -> list[str]:
    if not terms:
        return [FALLBACK]
    return list(terms)


def candidate_words(terms: Sequence[str] | None) -> list[str]:
    words, _ = normalize_terms(apply_fallback(terms))
    # Terms made only of punctuation normalise to nothing; treat as absent.
    return words or [FALLBACK]


def reference_words(terms: Sequence[str]) -> list[str]:
    return candidate_words(terms)


def join_annotation(terms: Sequence[str]) -> str:
    return " ".join(candidate_words(terms)) + "."


def ngram_counts(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def bleu_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    """Cumulative BLEU-n with uniform weights, no smoothing."""
    if not 1 <= n <= 4:
        raise InvalidOrder(f"BLEU order must be in 1..4, got {n}")
    if not reference:
        raise EmptyReference("reference word list is empty")
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        cand = ngram_counts(candidate, k)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        ref = ngram_counts(reference, k)
        clipped = sum(min(count, ref[g]) for g, count in cand.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / n)


def _require_gold(gold: Corpus):
    if len(gold) == 0:
        raise EmptyGold("gold corpus is empty")


def corpus_bleu(preds: PredictionSet, gold: Corpus, n: int) -> float:
    _require_gold(gold)
    scores = [
        bleu_n(candidate_words(preds.get(r.id)), reference_words(r.mesh_terms), n)
        for r in gold
    ]
    return math.fsum(scores) / len(scores)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, tp, fp, fn)


def micro_prf(preds: PredictionSet, gold: Corpus) -> PRF:
    _require_gold(gold)
    tp = fp = fn = 0
    for report in gold:
        cand = Counter(candidate_words(preds.get(report.id)))
        ref = Counter(reference_words(report.mesh_terms))
        overlap = sum((cand & ref).values())
        tp += overlap
        fp += sum(cand.values()) - overlap
        fn += sum(ref.values()) - overlap
    return PRF.from_counts(tp, fp, fn)


def per_pathology_prf(preds: PredictionSet, gold: Corpus,
                      pathologies: Iterable[str] = DEFAULT_PATHOLOGIES) -> dict[str, PRF]:
    pathologies = list(dict.fromkeys(p.strip().lower() for p in pathologies))
    if not pathologies:
        raise EmptyPathologyList("no pathologies given")
    for p in pathologies:
        if not p or len(p.split()) != 1:
            raise ValueError(f"pathology {p!r} must be a single word")
    _require_gold(gold)
    counts = {p: [0, 0, 0] for p in pathologies}
    for report in gold:
        cand = set(candidate_words(preds.get(report.id)))
        ref = set(reference_words(report.mesh_terms))
        for p in pathologies:
            predicted, actual = p in cand, p in ref
            if predicted and actual:
                counts[p][0] += 1
            elif predicted:
                counts[p][1] += 1
            elif actual:
                counts[p][2] += 1
    return {p: PRF.from_counts(*c) for p, c in counts.items()}


@dataclass
class EvalReport:
    system_name: str
    n_reports: int
    bleu: tuple[float, float, float, float]
    overall: PRF
    per_pathology: dict[str, PRF]


def evaluate(preds: PredictionSet, gold: Corpus,
             pathologies: Iterable[str] = DEFAULT_PATHOLOGIES) -> EvalReport:
    bleu = tuple(corpus_bleu(preds, gold, n) for n in range(1, 5))
    return EvalReport(
        system_name=preds.system_name,
        n_reports=len(gold),
        bleu=bleu,
        overall=micro_prf(preds, gold),
        per_pathology=per_pathology_prf(preds, gold, pathologies),
    )


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def _tables(reports: Sequence[EvalReport], pathologies: Sequence[str] | None):
    """Yield (title, header, rows) for every table to render."""
    yield (
        "BLEU",
        ["system", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4"],
        [[r.system_name, *map(_pct, r.bleu)] for r in reports],
    )
    prf_header = ["system", "Precision", "Recall", "F1"]
    yield (
        "Overall",
        prf_header,
        [[r.system_name, _pct(r.overall.precision), _pct(r.overall.recall),
          _pct(r.overall.f1)] for r in reports],
    )
    if pathologies is None:
        pathologies = list(reports[0].per_pathology)
    for p in pathologies:
        rows = []
        for r in reports:
            s = r.per_pathology.get(p)
            if s is not None:
                rows.append([r.system_name, _pct(s.precision), _pct(s.recall), _pct(s.f1)])
        yield p, prf_header, rows


def render_tables(reports: Sequence[EvalReport], format: str = "markdown",
                  pathologies: Sequence[str] | None = None) -> str:
    """Render BLEU, overall and per-pathology tables; scores are percentages.

    ``csv`` output is long-form, one ``table,system,metric,value`` row per
    number.
    """
    if not reports:
        raise ValueError("nothing to render")
    tables = list(_tables(reports, pathologies))
    if format in ("md", "markdown"):
        out = []
        for title, header, rows in tables:
            out.append(f"### {title}\n")
            out.append("| " + " | ".join(header) + " |")
            out.append("|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|")
            for row in rows:
                out.append("| " + " | ".join(row) + " |")
            out.append("")
        return "\n".join(out)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["table", "system", "metric", "value"])
        for title, header, rows in tables:
            for row in rows:
                for metric, value in zip(header[1:], row[1:]):
                    writer.writerow([title, row[0], metric, value])
        return buf.getvalue()
    raise ValueError(f"unknown table format {format!r}")
