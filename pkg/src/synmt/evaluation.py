"""Translation metrics and the diagnostic analyses run over decoded output.

Alignments are sets of ``(source index, target index)`` pairs, 0-based.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import UNK
from .treebank import PhraseSpan

logger = logging.getLogger(__name__)

Alignment = set[tuple[int, int]]

DEFAULT_BUCKETS = (10, 20, 30, 40, 50)
DEFAULT_CATEGORIES = ("PP", "NP", "CP", "QP", "ALL")
DEFAULT_POS_GROUPS: dict[str, tuple[str, ...]] = {
    "NR": ("NR", "NNP", "NNPS"),
    "CD": ("CD",),
    "DT": ("DT",),
    "NN": ("NN", "NNS"),
    "VV": ("VV", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ"),
}


# BLEU

@dataclass
class BleuStats:
    """Sufficient statistics for corpus BLEU; they add up across sentences."""

    matches: list[int]
    totals: list[int]
    hyp_len: int = 0
    ref_len: int = 0

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            [a + b for a, b in zip(self.matches, other.matches)],
            [a + b for a, b in zip(self.totals, other.totals)],
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
        )


def _tokens(sent, lowercase: bool) -> list[str]:
    toks = sent.split() if isinstance(sent, str) else list(sent)
    return [t.lower() for t in toks] if lowercase else toks


def _ngrams(toks: Sequence[str], n: int) -> Counter:
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def bleu_stats(hypotheses, references, max_n: int = 4, case_insensitive: bool = True) -> BleuStats:
    """Clipped n-gram counts and closest-reference lengths.

    ``references[i]`` is a list of references for ``hypotheses[i]``; each
    sentence is a string or a token list.
    """
    hypotheses, references = list(hypotheses), list(references)
    if len(hypotheses) != len(references):
        raise ValueError(f"bleu: {len(hypotheses)} hypotheses but {len(references)} reference sets")
    stats = BleuStats([0] * max_n, [0] * max_n)
    for i, (hyp, refs) in enumerate(zip(hypotheses, references)):
        if isinstance(refs, str) or not refs:
            raise ValueError(f"bleu: sentence {i} needs a non-empty list of references")
        h = _tokens(hyp, case_insensitive)
        rs = [_tokens(r, case_insensitive) for r in refs]
        stats.hyp_len += len(h)
        stats.ref_len += min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
        for n in range(1, max_n + 1):
            counts = _ngrams(h, n)
            best: Counter = Counter()
            for r in rs:
                best |= _ngrams(r, n)
            stats.matches[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            stats.totals[n - 1] += max(len(h) - n + 1, 0)
    return stats


def bleu_from_stats(stats: BleuStats) -> float:
    if any(m == 0 for m in stats.matches) or stats.hyp_len == 0:
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(stats.matches, stats.totals)) / len(stats.matches)
    bp = 1.0 if stats.hyp_len > stats.ref_len else math.exp(1.0 - stats.ref_len / stats.hyp_len)
    return bp * math.exp(log_prec)


def bleu(hypotheses, references, max_n: int = 4, case_insensitive: bool = True) -> float:
    """Corpus BLEU in [0, 1], unsmoothed."""
    hypotheses = list(hypotheses)
    if not hypotheses:
        raise ValueError("bleu: empty hypothesis corpus")
    return bleu_from_stats(bleu_stats(hypotheses, references, max_n, case_insensitive))


def bucket_label(length: int, edges: Sequence[int]) -> str:
    lo = 0
    for e in edges:
        if length <= e:
            return f"({lo},{e}]"
        lo = e
    return f">{lo}"


def bleu_by_length(
    hypotheses, references, source_lengths: Sequence[int], edges: Sequence[int] = DEFAULT_BUCKETS
) -> dict[str, float]:
    """BLEU per source-length bucket; empty buckets are left out."""
    edges = list(edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    hypotheses, references = list(hypotheses), list(references)
    groups: dict[str, list[int]] = {}
    for i, n in enumerate(source_lengths):
        groups.setdefault(bucket_label(n, edges), []).append(i)
    order = [bucket_label(e, edges) for e in edges] + [f">{edges[-1]}" if edges else ">0"]
    return {
        k: bleu([hypotheses[i] for i in groups[k]], [references[i] for i in groups[k]])
        for k in order
        if k in groups
    }


# alignment error rate

@dataclass
class GoldAlignment:
    sure: Alignment
    possible: Alignment

    def __post_init__(self):
        self.sure = set(self.sure)
        self.possible = set(self.possible) | self.sure


def parse_gold_line(line: str) -> GoldAlignment:
    """``"i-j"`` is a sure link, ``"i?j"`` possible only."""
    sure, possible = set(), set()
    for tok in line.split():
        sep = "-" if "-" in tok else "?"
        a, _, b = tok.partition(sep)
        try:
            link = (int(a), int(b))
        except ValueError:
            raise ValueError(f"bad alignment link {tok!r}") from None
        (sure if sep == "-" else possible).add(link)
    return GoldAlignment(sure, possible)


def read_gold(lines: Iterable[str]) -> list[GoldAlignment]:
    out = []
    for n, line in enumerate(lines, 1):
        try:
            out.append(parse_gold_line(line))
        except ValueError as e:
            raise ValueError(f"line {n}: {e}") from None
    return out


def parse_pharaoh(line: str) -> Alignment:
    links = set()
    for tok in line.split():
        a, _, b = tok.partition("-")
        links.add((int(a), int(b)))
    return links


def aer(hypothesis, gold) -> float:
    """Corpus AER; both arguments are per-sentence lists (a single pair is accepted too)."""
    if isinstance(gold, GoldAlignment):
        hypothesis, gold = [hypothesis], [gold]
    if len(hypothesis) != len(gold):
        raise ValueError(f"aer: {len(hypothesis)} hypothesis alignments but {len(gold)} gold")
    a_s = a_p = n_a = n_s = 0
    for a, g in zip(hypothesis, gold):
        a = set(a)
        a_s += len(a & g.sure)
        a_p += len(a & g.possible)
        n_a += len(a)
        n_s += len(g.sure)
    if n_a + n_s == 0:
        logger.warning("aer: no links in hypothesis or gold; reporting 0")
        return 0.0
    return 1.0 - (a_s + a_p) / (n_a + n_s)


# phrase continuity

CONT, DIS, UN = "Cont.", "Dis.", "Un."


def continuity_label(span: PhraseSpan | tuple[int, int], alignment: Alignment) -> str:
    start, end = (span.start, span.end) if isinstance(span, PhraseSpan) else span
    targets = sorted({t for s, t in alignment if start <= s <= end})
    if not targets:
        return UN
    return CONT if targets[-1] - targets[0] + 1 == len(targets) else DIS


def _ordered(rows: dict) -> dict:
    """Categories alphabetically, then ``ALL``."""
    return {k: rows[k] for k in sorted(rows, key=lambda k: (k == "ALL", k))}


def _percent(counts: Mapping[str, int], keys: Sequence[str]) -> dict[str, float]:
    total = sum(counts.get(k, 0) for k in keys)
    return {k: (100.0 * counts.get(k, 0) / total if total else 0.0) for k in keys}


def phrase_continuity(
    spans: Sequence[Sequence[PhraseSpan]], alignments: Sequence[Alignment], categories: Sequence[str] | None = None
) -> dict[str, dict[str, float]]:
    """Per-category ``{Cont., Dis., Un.}`` percentages plus an ``ALL`` row.

    ``spans[i]`` are sentence i's phrases (spans are inclusive).
    """
    if len(spans) != len(alignments):
        raise ValueError("phrase_continuity: spans and alignments differ in length")
    counts: dict[str, Counter] = {}
    for sent_spans, links in zip(spans, alignments):
        for sp in sent_spans:
            if categories is not None and sp.category not in categories:
                continue
            label = continuity_label(sp, links)
            counts.setdefault(sp.category, Counter())[label] += 1
            counts.setdefault("ALL", Counter())[label] += 1
    keys = (CONT, DIS, UN)
    return _ordered({cat: {**_percent(c, keys), "count": sum(c.values())} for cat, c in counts.items()})


# over translation

def over_translation(target_tokens: Sequence[str]) -> int:
    """``|e| - |uniq(e)|`` for the tokens a word was translated into."""
    return len(target_tokens) - len(set(target_tokens))


def rot(
    pos_tags: Sequence[Sequence[str]],
    alignments: Sequence[Alignment],
    targets: Sequence[Sequence[str]],
    groups: Mapping[str, Sequence[str]] | None = None,
) -> dict[str, dict[str, float]]:
    """Ratio of over translation per POS group and overall.

    Each row holds ``rot`` plus its parts: summed ``t``, summed ``|e|`` and
    ``uniq(e)``, and the number of words ``|w|``.
    """
    groups = DEFAULT_POS_GROUPS if groups is None else groups
    tag_group = {tag: g for g, tags in groups.items() for tag in tags}
    rows: dict[str, dict[str, float]] = {}

    def bump(key, t, e, u):
        r = rows.setdefault(key, {"t": 0, "e": 0, "uniq": 0, "words": 0})
        r["t"] += t
        r["e"] += e
        r["uniq"] += u
        r["words"] += 1

    for tags, links, tgt in zip(pos_tags, alignments, targets, strict=True):
        for i, tag in enumerate(tags):
            e = [tgt[j] for s, j in sorted(links, key=lambda l: l[1]) if s == i]
            t = over_translation(e)
            bump("ALL", t, len(e), len(set(e)))
            if tag in tag_group:
                bump(tag_group[tag], t, len(e), len(set(e)))
    for r in rows.values():
        r["rot"] = r["t"] / r["words"] if r["words"] else 0.0
    return _ordered(rows)


# rare words

NON_UNK = "non-UNK"


def rare_word_label(target_tokens: Iterable[str], unk: str = UNK) -> str:
    toks = list(target_tokens)
    if not toks:
        return UN
    return NON_UNK if any(t != unk for t in toks) else "UNK"


def rare_word_report(
    source_tokens: Sequence[Sequence[str]],
    pos_tags: Sequence[Sequence[str]],
    src_vocab,
    alignments: Sequence[Alignment],
    targets: Sequence[Sequence[str]],
    groups: Mapping[str, Sequence[str]] | None = None,
    unk: str = UNK,
) -> dict[str, dict[str, float]]:
    """For every source word outside the vocabulary, how it was translated.

    Rows per POS group and ``ALL`` give ``non-UNK``/``UNK``/``Un.``
    percentages and a count.
    """
    groups = DEFAULT_POS_GROUPS if groups is None else groups
    tag_group = {tag: g for g, tags in groups.items() for tag in tags}
    counts: dict[str, Counter] = {}
    for words, tags, links, tgt in zip(source_tokens, pos_tags, alignments, targets, strict=True):
        for i, w in enumerate(words):
            if w in src_vocab.stoi:
                continue
            label = rare_word_label([tgt[j] for s, j in links if s == i], unk)
            counts.setdefault("ALL", Counter())[label] += 1
            g = tag_group.get(tags[i]) if i < len(tags) else None
            if g is not None:
                counts.setdefault(g, Counter())[label] += 1
    keys = (NON_UNK, "UNK", UN)
    return _ordered({g: {**_percent(c, keys), "count": sum(c.values())} for g, c in counts.items()})


# report

@dataclass
class DiagnosticReport:
    bleu: float | None = None
    bleu_by_length: dict[str, float] = field(default_factory=dict)
    aer: float | None = None
    continuity: dict[str, dict[str, float]] = field(default_factory=dict)
    rot: dict[str, dict[str, float]] = field(default_factory=dict)
    rare_words: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DiagnosticReport":
        return cls(**json.loads(text))

    def table(self) -> str:
        lines = []
        if self.bleu is not None:
            lines.append(f"BLEU  {100 * self.bleu:.2f}")
        if self.aer is not None:
            lines.append(f"AER   {100 * self.aer:.2f}")
        if self.bleu_by_length:
            lines.append("")
            lines.append("length      BLEU")
            for k, v in self.bleu_by_length.items():
                lines.append(f"{k:<10}  {100 * v:6.2f}")
        for title, rows, keys in (
            ("phrase", self.continuity, (CONT, DIS, UN)),
            ("rare POS", self.rare_words, (NON_UNK, "UNK", UN)),
        ):
            if rows:
                lines.append("")
                lines.append(f"{title:<10}" + "".join(f"{k:>9}" for k in keys) + f"{'n':>7}")
                for cat, row in rows.items():
                    lines.append(f"{cat:<10}" + "".join(f"{row[k]:9.1f}" for k in keys) + f"{row['count']:7d}")
        if self.rot:
            lines.append("")
            lines.append(f"{'POS':<10}{'ROT':>8}{'t':>6}{'|e|':>6}{'uniq':>6}{'|w|':>6}")
            for g, r in self.rot.items():
                lines.append(f"{g:<10}{100 * r['rot']:7.2f}%{r['t']:6d}{r['e']:6d}{r['uniq']:6d}{r['words']:6d}")
        return "\n".join(lines)
