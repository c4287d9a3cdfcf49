"""Dictionary term extraction with NegEx-style negation scoping.

A cue such as ``no`` or ``without`` negates everything after it up to the end
of its sentence, or up to a scope-closing conjunction (``but``, ``which`` ...).
Post cues such as ``within normal limits`` negate the words before them.
Lexicon phrases are matched longest-first over token norms; a match lying
wholly inside a negation scope is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

from radex.corpus import Report
from radex.textprep import PLACEHOLDER, Token, tokenize, tokenize_report


def normalize_phrase(text: str) -> str:
    return " ".join(tok.norm for tok in tokenize(text))


def read_entries(lines: Iterable[str]) -> list[str]:
    out = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


@dataclass(frozen=True)
class Lexicon:
    entries: frozenset[str]

    def __post_init__(self):
        entries = frozenset(filter(None, (normalize_phrase(e) for e in self.entries)))
        for entry in entries:
            if PLACEHOLDER in entry.split():
                raise ValueError(f"lexicon entry {entry!r} contains a redaction token")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_terms(cls, terms: Iterable[str]) -> "Lexicon":
        return cls(frozenset(terms))

    @classmethod
    def from_file(cls, path: str | Path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls(frozenset(read_entries(fh)))

    @classmethod
    def default(cls) -> "Lexicon":
        text = resources.files("radex.data").joinpath("lexicon.txt").read_text("utf-8")
        return cls(frozenset(read_entries(text.splitlines())))

    @property
    def max_words(self) -> int:
        return max((len(e.split()) for e in self.entries), default=0)

    def __contains__(self, phrase: str) -> bool:
        return phrase in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class NegationConfig:
    cues: frozenset[tuple[str, ...]]
    conjunctions: frozenset[str]
    post_cues: frozenset[tuple[str, ...]] = frozenset()

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "NegationConfig":
        sections: dict[str, list[str]] = {"cues": [], "conjunctions": [], "post_cues": []}
        current = "cues"
        for line in read_entries(lines):
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip().lower()
                if current not in sections:
                    raise ValueError(f"unknown negation section [{current}]")
                continue
            sections[current].append(line)
        return cls(
            cues=frozenset(tuple(normalize_phrase(c).split()) for c in sections["cues"]),
            conjunctions=frozenset(normalize_phrase(c) for c in sections["conjunctions"]),
            post_cues=frozenset(
                tuple(normalize_phrase(c).split()) for c in sections["post_cues"]
            ),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "NegationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh)

    @classmethod
    def default(cls) -> "NegationConfig":
        text = resources.files("radex.data").joinpath("negation.txt").read_text("utf-8")
        return cls.parse(text.splitlines())


@dataclass(frozen=True)
class NegationScope:
    """Negated token positions ``[start, end)`` within one sentence.

    ``trigger`` is the position of the first cue word. Forward scopes start
    after the cue; backward scopes (post cues) end where the cue begins.
    """

    sentence_index: int
    trigger: int
    start: int
    end: int
    backward: bool = False

    def covers(self, start: int, end: int) -> bool:
        return self.start <= start and end <= self.end


def _match_at(norms: Sequence[str], i: int, phrases: Iterable[tuple[str, ...]]) -> int:
    best = 0
    for phrase in phrases:
        k = len(phrase)
        if k > best and tuple(norms[i : i + k]) == phrase:
            best = k
    return best


def detect_negation(
    tokens: Sequence[Token], config: NegationConfig | None = None
) -> list[NegationScope]:
    config = config or NegationConfig.default()
    scopes = []
    for sent_idx, group in groupby(tokens, key=lambda t: t.sentence_index):
        sent = list(group)
        norms = [t.norm for t in sent]
        n = len(sent)
        i = 0
        while i < n:
            k = _match_at(norms, i, config.cues)
            if k:
                end = i + k
                while end < n and norms[end] not in config.conjunctions:
                    end += 1
                start_pos = sent[i + k].position if i + k < n else sent[-1].position + 1
                end_pos = sent[end - 1].position + 1 if end > i + k else start_pos
                scopes.append(NegationScope(sent_idx, sent[i].position, start_pos, end_pos))
                i += k
                continue
            k = _match_at(norms, i, config.post_cues)
            if k:
                begin = i
                while begin > 0 and norms[begin - 1] not in config.conjunctions:
                    begin -= 1
                start_pos = sent[begin].position if begin < i else sent[i].position
                scopes.append(
                    NegationScope(sent_idx, sent[i].position, start_pos, sent[i].position, True)
                )
                i += k
                continue
            i += 1
    return scopes


@dataclass(frozen=True)
class Match:
    term: str
    start: int
    end: int
    sentence_index: int
    negated: bool = False


def find_matches(
    tokens: Sequence[Token],
    lexicon: Lexicon,
    scopes: Sequence[NegationScope] = (),
) -> list[Match]:
    """Longest-first lexicon matches, each confined to one sentence."""
    longest = lexicon.max_words
    matches = []
    for sent_idx, group in groupby(tokens, key=lambda t: t.sentence_index):
        sent = list(group)
        norms = [t.norm for t in sent]
        i = 0
        while i < len(sent):
            for k in range(min(longest, len(sent) - i), 0, -1):
                phrase = " ".join(norms[i : i + k])
                if phrase in lexicon:
                    start, end = sent[i].position, sent[i + k - 1].position + 1
                    negated = any(
                        s.sentence_index == sent_idx and s.covers(start, end)
                        for s in scopes
                    )
                    matches.append(Match(phrase, start, end, sent_idx, negated))
                    i += k
                    break
            else:
                i += 1
    return matches


def extract_dictionary(
    report: Report,
    lexicon: Lexicon,
    negation: NegationConfig | None = None,
    use_negation: bool = True,
) -> list[str]:
    if not len(lexicon):
        raise ValueError("lexicon is empty")
    tokens = tokenize_report(report)
    scopes = detect_negation(tokens, negation) if use_negation else []
    seen: dict[str, None] = {}
    for match in find_matches(tokens, lexicon, scopes):
        if not match.negated:
            seen.setdefault(match.term)
    return list(seen)
