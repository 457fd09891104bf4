"""Glue shared by the command line and the estimator: files in, reports out."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt_io
from .config import DataPaths, RunConfig
from .corpus import ExamplePair, Vocabulary, build_vocabularies, make_example, make_examples
from .evaluation import (
    DiagnosticReport,
    aer,
    bleu,
    bleu_by_length,
    phrase_continuity,
    read_gold,
    rare_word_report,
    rot,
)
from .inference import Translation, force_decode_corpus, extract_alignment, translate
from .model import ModelParams, init_params
from .training import AdaDeltaState, TrainReport, TrainState, train
from .treebank import ParseTree, TreeParseError, extract_spans, parse_bracketed, pos_tags

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent input data; messages carry file and line."""


def read_lines(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def parse_tree_lines(lines: Sequence[str], source: str = "<trees>") -> list[ParseTree]:
    out = []
    for n, line in enumerate(lines, 1):
        try:
            out.append(parse_bracketed(line))
        except TreeParseError as e:
            raise DataError(f"{source}:{n}: {e}") from None
    return out


@dataclass
class Corpus:
    src: list[str]
    trees: list[ParseTree] | None
    tgt: list[str] | None
    gold: list | None = None

    def __len__(self) -> int:
        return len(self.src)


def load_corpus(paths: DataPaths, need_trees: bool = True, need_target: bool = True, name: str = "data") -> Corpus:
    if paths.src is None:
        raise DataError(f"{name}.src is not set")
    src = read_lines(paths.src)
    trees = None
    if paths.tree is not None:
        trees = parse_tree_lines(read_lines(paths.tree), paths.tree)
    elif need_trees:
        raise DataError(f"{name}.tree is not set")
    tgt = None
    if paths.tgt is not None:
        tgt = read_lines(paths.tgt)
    elif need_target:
        raise DataError(f"{name}.tgt is not set")
    gold = read_gold(read_lines(paths.align)) if paths.align is not None else None
    for label, other in (("tree", trees), ("tgt", tgt), ("align", gold)):
        if other is not None and len(other) != len(src):
            raise DataError(f"{name}: {len(src)} source lines but {len(other)} {label} lines")
    return Corpus(src, trees, tgt, gold)


@dataclass
class Vocabs:
    src: Vocabulary
    tgt: Vocabulary
    labels: Vocabulary | None

    def as_dict(self) -> dict[str, Vocabulary | None]:
        return {"src": self.src, "tgt": self.tgt, "labels": self.labels}

    @classmethod
    def from_dict(cls, d) -> "Vocabs":
        return cls(d["src"], d["tgt"], d.get("labels"))


def build_vocabs(cfg: RunConfig, corpus: Corpus) -> Vocabs:
    return Vocabs(*build_vocabularies(corpus.src, corpus.trees, corpus.tgt, cfg.variant, cfg.src_vocab_size, cfg.tgt_vocab_size))


def training_examples(cfg: RunConfig, corpus: Corpus, vocabs: Vocabs) -> list[ExamplePair]:
    trees = corpus.trees if cfg.variant != "baseline" else None
    return make_examples(corpus.src, trees, corpus.tgt, vocabs.src, vocabs.tgt, cfg.variant, vocabs.labels, cfg.limits())


def decoding_examples(variant: str, corpus: Corpus, vocabs: Vocabs, with_target: bool = False) -> list[ExamplePair]:
    """One example per input line, no length filtering; bad lines are fatal."""
    out = []
    for i, line in enumerate(corpus.src):
        toks = line.split()
        if not toks:
            raise DataError(f"line {i + 1}: empty source sentence")
        tgt = corpus.tgt[i].split() if with_target and corpus.tgt is not None else None
        if with_target and not tgt:
            raise DataError(f"line {i + 1}: empty target sentence")
        tree = corpus.trees[i] if corpus.trees is not None else None
        try:
            out.append(make_example(toks, tgt, tree, vocabs.src, vocabs.tgt, variant, vocabs.labels, index=i))
        except ValueError as e:
            raise DataError(f"line {i + 1}: {e}") from None
    return out


def new_train_state(cfg: RunConfig, vocabs: Vocabs) -> TrainState:
    """Model init and all later randomness come from one generator seeded by ``cfg.seed``."""
    model_cfg = cfg.model_config(len(vocabs.src), len(vocabs.tgt), len(vocabs.labels) if vocabs.labels else 1)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(model_cfg, rng)
    return TrainState(params, AdaDeltaState.for_params(params, cfg.rho, cfg.eps), rng)


def fit(
    cfg: RunConfig,
    corpus: Corpus,
    dev: Corpus | None = None,
    out_dir=None,
    progress=None,
    state: TrainState | None = None,
    vocabs: Vocabs | None = None,
) -> tuple[TrainState, Vocabs, list[TrainReport]]:
    """Train from scratch (or continue ``state``); checkpoints go to ``out_dir``."""
    vocabs = vocabs or build_vocabs(cfg, corpus)
    examples = training_examples(cfg, corpus, vocabs)
    if not examples:
        raise DataError("no training pairs survive the length limits")
    state = state or new_train_state(cfg, vocabs)
    dev_score = None
    if dev is not None and dev.tgt is not None:
        dev_examples = decoding_examples(cfg.variant, dev, vocabs)
        refs = [[t.split()] for t in dev.tgt]

        def dev_score(params: ModelParams) -> float:
            hyps = translate(params, dev_examples, vocabs.tgt.itos, beam=1)
            return bleu([h.words for h in hyps], refs)

    on_epoch = None
    if out_dir is not None:
        out_dir = Path(out_dir)

        def on_epoch(st: TrainState, report: TrainReport, is_best: bool) -> None:
            c = ckpt_io.from_train_state(st, vocabs.as_dict(), cfg.to_dict())
            ckpt_io.save(c, out_dir / "last.ckpt")
            if is_best or dev_score is None:
                ckpt_io.save(c, out_dir / "best.ckpt")

    reports = train(state, examples, cfg.train_config(), dev_score=dev_score, on_epoch=on_epoch, progress=progress)
    return state, vocabs, reports


def load_model(path) -> tuple[ModelParams, Vocabs, dict | None]:
    c = ckpt_io.load(path)
    return c.params, Vocabs.from_dict(c.vocabs), c.run_config


def write_translations(translations: Sequence[Translation], out_prefix) -> tuple[Path, Path]:
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    txt, aln = (out_prefix.with_name(out_prefix.name + ext) for ext in (".txt", ".align"))
    txt.write_text("".join(" ".join(t.words) + "\n" for t in translations), encoding="utf-8")
    aln.write_text(
        "".join(" ".join(f"{s}-{j}" for s, j in sorted(t.alignment)) + "\n" for t in translations), encoding="utf-8"
    )
    return txt, aln


def forced_alignments(params: ModelParams, examples: Sequence[ExamplePair]) -> list[set[tuple[int, int]]]:
    results = force_decode_corpus(params, examples)
    return [extract_alignment(r.attention, ex.n_words, len(ex.tgt) - 1) for r, ex in zip(results, examples)]


def analyze(
    cfg: RunConfig,
    corpus: Corpus,
    hypotheses: Sequence[Sequence[str]],
    alignments: Sequence[set],
    vocabs: Vocabs,
    forced: Sequence[set] | None = None,
) -> DiagnosticReport:
    """Every diagnostic the data allows.

    ``alignments`` link sources to ``hypotheses``.  ``forced`` holds forced
    decoding links against the references; AER is scored on them when gold
    links exist.  ``cfg.alignment_source`` picks which pair (system output
    or forced references) drives continuity, ROT and rare-word analysis.
    """
    if len(hypotheses) != len(corpus) or len(alignments) != len(corpus):
        raise DataError(f"{len(corpus)} sources but {len(hypotheses)} hypotheses / {len(alignments)} alignments")
    report = DiagnosticReport()
    lengths = [len(s.split()) for s in corpus.src]
    if corpus.tgt is not None:
        refs = [[t.split()] for t in corpus.tgt]
        report.bleu = bleu(hypotheses, refs)
        report.bleu_by_length = bleu_by_length(hypotheses, refs, lengths, cfg.bucket_edges)
    if corpus.gold is not None and forced is not None:
        report.aer = aer(list(forced), corpus.gold)
    if cfg.alignment_source == "forced":
        if forced is None or corpus.tgt is None:
            raise DataError("alignment_source 'forced' needs references and forced alignments")
        alignments, hypotheses = forced, [t.split() for t in corpus.tgt]
    if corpus.trees is not None:
        spans = [extract_spans(t, cfg.phrase_categories) for t in corpus.trees]
        report.continuity = phrase_continuity(spans, alignments)
        tags = [pos_tags(t) for t in corpus.trees]
        report.rot = rot(tags, alignments, hypotheses, cfg.pos_groups)
        src_tokens = [s.split() for s in corpus.src]
        report.rare_words = rare_word_report(src_tokens, tags, vocabs.src, alignments, hypotheses, cfg.pos_groups)
    return report
