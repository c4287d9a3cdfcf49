"""Report records, corpus ingestion and deterministic splitting.

Two ingestion formats are supported: sectioned plain text (one report per
file, ``FINDINGS:`` / ``IMPRESSION:`` headers) and JSONL with one record per
line::

    {"id": "r1", "findings": "...", "impression": "...", "mesh_terms": ["..."]}

Splits are produced by a Fisher-Yates shuffle driven by SplitMix64, so a
given (corpus, seed, ratios) triple always yields the same partition on any
platform.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from radex.errors import (
    DuplicateId,
    DuplicateSection,
    EmptyCorpus,
    EmptyInput,
    ParseError,
)

MASK64 = (1 << 64) - 1

_KNOWN_HEADER = re.compile(r"^\s*(findings|impression)\s*:(.*)$", re.IGNORECASE)
# Other section headers are recognised only in upper case ("COMPARISON:").
_OTHER_HEADER = re.compile(r"^\s*[A-Z][A-Z /&-]*:(.*)$")


@dataclass(frozen=True)
class Report:
    id: str
    findings: str = ""
    impression: str = ""
    mesh_terms: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("report id must be a non-empty string")
        object.__setattr__(self, "mesh_terms", tuple(self.mesh_terms))

    @property
    def text(self) -> str:
        """Findings followed by impression, the only text that gets processed."""
        return "\n".join(part for part in (self.findings, self.impression) if part)

    @property
    def usable(self) -> bool:
        return bool(self.findings.strip() or self.impression.strip())

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "findings": self.findings,
            "impression": self.impression,
            "mesh_terms": list(self.mesh_terms),
        }


@dataclass(frozen=True)
class Corpus:
    reports: tuple[Report, ...]
    source: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        reports = tuple(self.reports)
        index = {}
        for report in reports:
            if report.id in index:
                raise DuplicateId(report.id)
            index[report.id] = report
        object.__setattr__(self, "reports", reports)
        object.__setattr__(self, "_index", index)

    def __iter__(self) -> Iterator[Report]:
        return iter(self.reports)

    def __len__(self) -> int:
        return len(self.reports)

    def __contains__(self, report_id: str) -> bool:
        return report_id in self._index

    def __getitem__(self, report_id: str) -> Report:
        return self._index[report_id]

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.reports]


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) != 3:
            raise ValueError("exactly three ratios are required")
        if any(r < 0 or math.isnan(r) for r in ratios):
            raise ValueError("ratios must be non-negative")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
        object.__setattr__(self, "ratios", ratios)


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood); 64-bit state, 64-bit output."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits of the next output."""
        return (self.next() >> 11) * (1.0 / (1 << 53))


def shuffled(items: Sequence, seed: int) -> list:
    """Fisher-Yates shuffle: for i = n-1 .. 1 swap i with next() mod (i+1)."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def parse_sectioned_text(text: str, id: str) -> Report:
    """Build a report from text with ``FINDINGS:`` / ``IMPRESSION:`` headers.

    Text following an unrecognised upper-case header such as ``COMPARISON:``
    is dropped, as is anything before the first header.
    """
    if not text or not text.strip():
        raise EmptyInput(f"report {id!r} is blank")
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        known = _KNOWN_HEADER.match(line)
        if known:
            name = known.group(1).lower()
            if name in sections:
                raise DuplicateSection(name)
            current = sections[name] = [known.group(2)]
            continue
        other = _OTHER_HEADER.match(line)
        if other:
            current = None
            continue
        if current is not None:
            current.append(line)
    findings = "\n".join(sections.get("findings", [])).strip()
    impression = "\n".join(sections.get("impression", [])).strip()
    return Report(id=id, findings=findings, impression=impression)


def load_sectioned_file(path: str | Path) -> Report:
    path = Path(path)
    return parse_sectioned_text(path.read_text(encoding="utf-8"), path.stem)


def _record_to_report(record, lineno: int) -> Report:
    if not isinstance(record, dict):
        raise ParseError(lineno, "record is not a JSON object")
    rid = record.get("id")
    if not isinstance(rid, str) or not rid:
        raise ParseError(lineno, "missing or empty 'id'")
    texts = {}
    for key in ("findings", "impression"):
        value = record.get(key, "")
        if value is None:
            value = ""
        if not isinstance(value, str):
            raise ParseError(lineno, f"'{key}' must be a string")
        texts[key] = value
    terms = record.get("mesh_terms", [])
    if terms is None:
        terms = []
    if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
        raise ParseError(lineno, "'mesh_terms' must be a list of strings")
    return Report(id=rid, mesh_terms=tuple(terms), **texts)


def load_corpus_jsonl(path: str | Path) -> Corpus:
    path = Path(path)
    reports = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            report = _record_to_report(record, lineno)
            if report.id in seen:
                raise DuplicateId(report.id, lineno)
            seen.add(report.id)
            reports.append(report)
    return Corpus(tuple(reports), source=str(path))


def dump_corpus_jsonl(reports: Iterable[Report]) -> str:
    return "".join(
        json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in reports
    )


def save_corpus_jsonl(corpus: Corpus | Iterable[Report], path: str | Path) -> None:
    Path(path).write_text(dump_corpus_jsonl(corpus), encoding="utf-8", newline="\n")


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Shuffle with ``spec.seed`` and cut into train/validation/test.

    The first two parts get ``floor(N * ratio)`` reports each; the test part
    takes the remainder.
    """
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    order = shuffled(corpus.reports, spec.seed)
    n_train = math.floor(n * spec.ratios[0])
    n_val = min(math.floor(n * spec.ratios[1]), n - n_train)
    parts = (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )
    names = ("train", "val", "test")
    return tuple(
        Corpus(tuple(part), source=f"{corpus.source}#{name}")
        for part, name in zip(parts, names)
    )
