"""Synthetic chest X-ray reports with a known answer key.

Each report mixes affirmed findings, negated findings and filler sentences.
Gold terms are exactly the affirmed pathology words; a word never appears
both affirmed and negated in one report, so projecting the gold terms onto
tokens marks negated mentions NONKEYWORD.
"""

from __future__ import annotations

from radex.corpus import Corpus, Report, SplitMix64

PATHOLOGIES = (
    "opacity", "cardiomegaly", "pneumothorax", "effusion", "granuloma",
    "atelectasis", "consolidation", "emphysema", "nodule", "scoliosis",
)

_LOCATIONS = (
    "right upper lobe", "left lower lobe", "right midlung", "left base",
    "lingula", "right hilum", "left apex", "bilateral bases",
)
_MODIFIERS = ("mild", "small", "stable", "moderate", "new", "chronic", "focal", "large")

_AFFIRMED = (
    "{Mod} {p} in the {loc}.",
    "There is {mod} {p} in the {loc}.",
    "Findings are consistent with {p}.",
    "{Mod} {p} is again noted.",
    "Interval development of {mod} {p}.",
)
_NEGATED = (
    "No {p}.",
    "No evidence of {p} or {q}.",
    "The lungs are without {p}.",
    "Negative for {p}.",
    "There is no {p} in the {loc}.",
    "No {mod} {p} is identified.",
)
_FILLER = (
    "Heart size is normal.",
    "The mediastinal contours are stable.",
    "Osseous structures are intact.",
    "The trachea is midline.",
    "Comparison is made to the prior study.",
    "Surgical clips in the {loc}.",
)


class _Draw:
    def __init__(self, seed: int):
        self.rng = SplitMix64(seed)

    def below(self, n: int) -> int:
        return self.rng.next() % n

    def pick(self, seq):
        return seq[self.below(len(seq))]

    def sample(self, seq, k: int) -> list:
        pool = list(seq)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.below(len(pool))))
        return out


def _fill(template: str, draw: _Draw, p: str, q: str = "") -> str:
    mod = draw.pick(_MODIFIERS)
    return template.format(
        p=p, q=q, mod=mod, Mod=mod.capitalize(), loc=draw.pick(_LOCATIONS)
    )


def synth_report(report_id: str, draw: _Draw) -> Report:
    n_pos = draw.below(3) + (0 if draw.below(6) == 0 else 1)
    n_neg = 1 + draw.below(2)
    chosen = draw.sample(PATHOLOGIES, n_pos + 2 * n_neg)
    positives, negatives = chosen[:n_pos], chosen[n_pos:]
    sentences = [_fill(draw.pick(_AFFIRMED), draw, p) for p in positives]
    for j in range(n_neg):
        p, q = negatives[2 * j], negatives[2 * j + 1]
        sentences.append(_fill(draw.pick(_NEGATED), draw, p, q))
    sentences += [_fill(draw.pick(_FILLER), draw, "") for _ in range(1 + draw.below(2))]
    # Fisher-Yates over sentences so affirmed and negated mentions interleave.
    for i in range(len(sentences) - 1, 0, -1):
        j = draw.below(i + 1)
        sentences[i], sentences[j] = sentences[j], sentences[i]
    cut = max(1, len(sentences) - 1)
    return Report(
        id=report_id,
        findings=" ".join(sentences[:cut]),
        impression=" ".join(sentences[cut:]),
        mesh_terms=tuple(p.capitalize() for p in positives),
    )


def synth_corpus(n: int, seed: int = 0, prefix: str = "syn") -> Corpus:
    draw = _Draw(seed)
    reports = tuple(synth_report(f"{prefix}{i:04d}", draw) for i in range(n))
    return Corpus(reports, source=f"synthetic(n={n}, seed={seed})")
