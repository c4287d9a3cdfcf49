"""Sentence splitting, tokenization and KEYWORD/NONKEYWORD label projection."""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from radex.corpus import Report
from radex.errors import MismatchedReport, ParseError

PLACEHOLDER = "xxxx"

_ENUMERATOR = re.compile(r"^\d{1,2}[.)]$")
_TERMINATORS = ".!?"
_CLOSERS = "\"')]"


class Label(str, enum.Enum):
    KEYWORD = "K"
    NONKEYWORD = "O"


KEYWORD = Label.KEYWORD
NONKEYWORD = Label.NONKEYWORD


@dataclass(frozen=True)
class Token:
    surface: str
    norm: str
    sentence_index: int = 0
    position: int = 0
    report_id: str | None = None


@dataclass(frozen=True)
class LabeledSequence:
    report_id: str
    tokens: tuple[Token, ...]
    labels: tuple[Label, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(Label(l) for l in self.labels))
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )

    @property
    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _strip_punct(piece: str) -> str:
    start, end = 0, len(piece)
    while start < end and _is_punct(piece[start]):
        start += 1
    while end > start and _is_punct(piece[end - 1]):
        end -= 1
    return piece[start:end]


def segment_sentences(text: str) -> list[str]:
    """Split on ``.``, ``!`` or ``?`` followed by whitespace or end of text.

    List enumerators such as ``1.`` or ``2)`` never end a sentence; one that
    appears mid-text starts a new sentence instead.
    """
    pieces = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
    sentences: list[str] = []
    start = None
    last_end = None

    def flush():
        nonlocal start
        if start is not None:
            sentences.append(text[start:last_end])
        start = None

    for k, (s, e) in enumerate(pieces):
        piece = text[s:e]
        if _ENUMERATOR.match(piece) and k + 1 < len(pieces):
            flush()
            start, last_end = s, e
            continue
        if start is None:
            start = s
        last_end = e
        if piece.rstrip(_CLOSERS)[-1:] in tuple(_TERMINATORS):
            flush()
    flush()
    return sentences


def tokenize(
    sentence: str,
    sentence_index: int = 0,
    start_position: int = 0,
    report_id: str | None = None,
) -> list[Token]:
    tokens = []
    for piece in sentence.split():
        surface = _strip_punct(piece)
        if not surface:
            continue
        tokens.append(
            Token(
                surface=surface,
                norm=surface.lower(),
                sentence_index=sentence_index,
                position=start_position + len(tokens),
                report_id=report_id,
            )
        )
    return tokens


def tokenize_text(text: str, report_id: str | None = None) -> list[Token]:
    """Tokenize every sentence of ``text`` into one position-ordered stream."""
    tokens: list[Token] = []
    sentence_index = 0
    for sentence in segment_sentences(text):
        sent_tokens = tokenize(sentence, sentence_index, len(tokens), report_id)
        if sent_tokens:
            tokens.extend(sent_tokens)
            sentence_index += 1
    return tokens


def tokenize_report(report: Report) -> list[Token]:
    """Tokens of the findings then the impression section.

    The sections are segmented separately so a missing full stop at the end
    of the findings never glues it onto the impression.
    """
    tokens: list[Token] = []
    sentence_index = 0
    for section in (report.findings, report.impression):
        for sentence in segment_sentences(section):
            sent_tokens = tokenize(sentence, sentence_index, len(tokens), report.id)
            if sent_tokens:
                tokens.extend(sent_tokens)
                sentence_index += 1
    return tokens


def normalize_terms(terms: Iterable[str]) -> tuple[list[str], Counter]:
    words = [tok.norm for term in terms for tok in tokenize(term)]
    return words, Counter(words)


def gold_word_set(report: Report) -> frozenset[str]:
    words, _ = normalize_terms(report.mesh_terms)
    return frozenset(words) - {PLACEHOLDER}


def label_tokens(report: Report, tokens: Sequence[Token]) -> LabeledSequence:
    for tok in tokens:
        if tok.report_id is not None and tok.report_id != report.id:
            raise MismatchedReport(
                f"token {tok.surface!r} belongs to {tok.report_id!r}, not {report.id!r}"
            )
    gold = gold_word_set(report)
    labels = [KEYWORD if tok.norm in gold else NONKEYWORD for tok in tokens]
    return LabeledSequence(report.id, tuple(tokens), tuple(labels))


def label_report(report: Report) -> LabeledSequence:
    return label_tokens(report, tokenize_report(report))


# Labeled JSONL: {"id": ..., "tokens": [norm, ...], "labels": ["K"|"O", ...]}

def dump_labeled_jsonl(sequences: Iterable[LabeledSequence]) -> str:
    lines = []
    for seq in sequences:
        record = {
            "id": seq.report_id,
            "tokens": seq.norms,
            "labels": [l.value for l in seq.labels],
        }
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
    return "".join(lines)


def save_labeled_jsonl(sequences: Iterable[LabeledSequence], path: str | Path) -> None:
    Path(path).write_text(dump_labeled_jsonl(sequences), encoding="utf-8", newline="\n")


def load_labeled_jsonl(path: str | Path) -> list[LabeledSequence]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                rid = record["id"]
                words = record["tokens"]
                labels = [Label(l) for l in record["labels"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, f"bad labeled record ({exc})") from None
            if not isinstance(rid, str) or not rid or len(words) != len(labels):
                raise ParseError(lineno, "id missing or tokens/labels length differ")
            tokens = tuple(
                Token(w, w.lower(), 0, i, rid) for i, w in enumerate(words)
            )
            out.append(LabeledSequence(rid, tokens, tuple(labels)))
    return out
