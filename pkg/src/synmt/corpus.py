"""Vocabularies, numericalized sentence pairs and padded batches."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .treebank import ParseTree, build_mixed, linearize

logger = logging.getLogger(__name__)

PAD, UNK, EOS = "<pad>", "<unk>", "</s>"
RESERVED = (PAD, UNK, EOS)
PAD_ID, UNK_ID, EOS_ID = 0, 1, 2

VARIANTS = ("baseline", "parallel", "hierarchical", "mixed")


class AlignmentMismatch(ValueError):
    """Parallel input files have different line counts."""


class Vocabulary:
    """Dense token ids with ``<pad>``=0, ``<unk>``=1, ``</s>``=2."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.coverage: float | None = None
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip_eos: bool = True) -> list[str]:
        out = []
        for i in ids:
            if strip_eos and i == EOS_ID:
                break
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, t in enumerate(self.itos):
                fh.write(f"{t}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                token, idx = line.rstrip("\n").rsplit("\t", 1)
                expected = vocab.stoi[token] if token in RESERVED else len(vocab.itos)
                if int(idx) != expected:
                    raise ValueError(f"{path}:{lineno}: ids must be dense and ordered")
                vocab.add(token)
        return vocab

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        return cls(tokens[len(RESERVED):])


def build_vocab(corpus: Iterable[Sequence[str]], limit: int, reserved: Sequence[str] = ()) -> Vocabulary:
    """Keep the ``limit`` most frequent tokens, counting reserved ids.

    ``reserved`` tokens (e.g. structural labels for the mixed encoder) are
    placed right after the special tokens and count toward ``limit``.
    Frequency ties go to the token seen first.
    """
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    total = 0
    for sent in corpus:
        for tok in sent:
            counts[tok] += 1
            first.setdefault(tok, len(first))
            total += 1
    if total == 0:
        raise ValueError("build_vocab: empty corpus")
    vocab = Vocabulary(reserved)
    if limit < len(vocab):
        raise ValueError(f"build_vocab: limit {limit} is below the {len(vocab)} reserved tokens")
    ranked = sorted((t for t in counts if t not in vocab), key=lambda t: (-counts[t], first[t]))
    for tok in ranked[: limit - len(vocab)]:
        vocab.add(tok)
    vocab.coverage = sum(c for t, c in counts.items() if t in vocab) / total
    return vocab


@dataclass
class Limits:
    source: int = 50
    target: int = 50
    labels: int = 100
    mixed: int = 150


@dataclass
class ExamplePair:
    """One numericalized pair.  Sequences carry a trailing ``</s>``."""

    src: list[int]
    tgt: list[int]
    labels: list[int] | None = None
    word_to_label: list[int] | None = None
    mixed: list[int] | None = None
    word_positions: list[int] | None = None
    src_tokens: list[str] = field(default_factory=list)
    pos_tags: list[str] = field(default_factory=list)
    index: int = -1

    @property
    def n_words(self) -> int:
        return len(self.src) - 1


def make_example(
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str] | None,
    tree: ParseTree | None,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary | None,
    variant: str,
    label_vocab: Vocabulary | None = None,
    index: int = -1,
) -> ExamplePair:
    """Numericalize one pair for ``variant``; no length filtering."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    src_tokens = list(src_tokens)
    ex = ExamplePair(
        src=src_vocab.encode(src_tokens) + [EOS_ID],
        tgt=(tgt_vocab.encode(tgt_tokens) + [EOS_ID]) if tgt_tokens is not None else [EOS_ID],
        src_tokens=src_tokens,
        index=index,
    )
    if tree is not None:
        lin = linearize(tree)
        if lin.words != src_tokens:
            raise ValueError("tree leaves do not match the source tokens")
        ex.pos_tags = [lin.labels[i] for i in lin.word_to_label]
        ex.word_to_label = lin.word_to_label + [len(lin.labels)]
        if variant in ("parallel", "hierarchical"):
            if label_vocab is None:
                raise ValueError(f"{variant} needs a label vocabulary")
            ex.labels = label_vocab.encode(lin.labels) + [EOS_ID]
        if variant == "mixed":
            mixed = build_mixed(tree)
            ex.mixed = src_vocab.encode(mixed.tokens) + [EOS_ID]
            ex.word_positions = mixed.word_positions + [len(mixed.tokens)]
    elif variant != "baseline":
        raise ValueError(f"{variant} needs a parse tree")
    return ex


def make_examples(
    src_lines: Sequence[str],
    trees: Sequence[ParseTree | None] | None,
    tgt_lines: Sequence[str],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    variant: str,
    label_vocab: Vocabulary | None = None,
    limits: Limits | None = None,
) -> list[ExamplePair]:
    """Numericalize aligned files, dropping pairs that violate ``limits``.

    Empty lines, unparsable trees and over-long sequences are skipped (the
    first two with a warning).  Line-count mismatches are fatal.
    """
    limits = limits or Limits()
    if len(src_lines) != len(tgt_lines) or (trees is not None and len(trees) != len(src_lines)):
        counts = f"source={len(src_lines)} target={len(tgt_lines)}"
        if trees is not None:
            counts += f" trees={len(trees)}"
        raise AlignmentMismatch(f"input files are not line-aligned: {counts}")
    if variant != "baseline" and trees is None:
        raise ValueError(f"{variant} needs parse trees")
    out = []
    for i, (s, t) in enumerate(zip(src_lines, tgt_lines)):
        src, tgt = s.split(), t.split()
        if not src or not tgt:
            logger.warning("line %d skipped: empty sentence", i + 1)
            continue
        if len(src) > limits.source or len(tgt) > limits.target:
            continue
        tree = trees[i] if trees is not None else None
        if trees is not None and tree is None:
            logger.warning("line %d skipped: no usable parse tree", i + 1)
            continue
        try:
            ex = make_example(src, tgt, tree, src_vocab, tgt_vocab, variant, label_vocab, index=i)
        except ValueError as exc:
            logger.warning("line %d skipped: %s", i + 1, exc)
            continue
        if ex.labels is not None and len(ex.labels) - 1 > limits.labels:
            continue
        if ex.mixed is not None and len(ex.mixed) - 1 > limits.mixed:
            continue
        out.append(ex)
    return out


@dataclass
class Batch:
    """Time-major padded ids (``[T, B]``) and 0/1 masks for one minibatch."""

    src: np.ndarray
    src_mask: np.ndarray
    tgt: np.ndarray
    tgt_mask: np.ndarray
    labels: np.ndarray | None = None
    label_mask: np.ndarray | None = None
    label_index: np.ndarray | None = None
    mixed: np.ndarray | None = None
    mixed_mask: np.ndarray | None = None
    word_positions: np.ndarray | None = None
    examples: list[ExamplePair] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.src.shape[1]

    @property
    def n_target_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((width, len(seqs)), PAD_ID, dtype=np.int64)
    mask = np.zeros((width, len(seqs)))
    for b, s in enumerate(seqs):
        ids[: len(s), b] = s
        mask[: len(s), b] = 1.0
    return ids, mask


def collate(examples: Sequence[ExamplePair]) -> Batch:
    if not examples:
        raise ValueError("collate: empty batch")
    src, src_mask = _pad([e.src for e in examples])
    tgt, tgt_mask = _pad([e.tgt for e in examples])
    batch = Batch(src, src_mask, tgt, tgt_mask, examples=list(examples))
    if all(e.labels is not None for e in examples):
        batch.labels, batch.label_mask = _pad([e.labels for e in examples])
        batch.label_index, _ = _pad([e.word_to_label for e in examples])
    if all(e.mixed is not None for e in examples):
        batch.mixed, batch.mixed_mask = _pad([e.mixed for e in examples])
        batch.word_positions, _ = _pad([e.word_positions for e in examples])
    return batch


def batches(
    examples: Sequence[ExamplePair],
    batch_size: int,
    rng: np.random.Generator | int | None = None,
    bucket_batches: int = 20,
) -> Iterator[Batch]:
    """One epoch of shuffled batches.

    Examples are shuffled, cut into chunks of ``bucket_batches`` batches,
    sorted by source length inside each chunk, batched, and the batch order
    is shuffled again.  ``rng=None`` keeps corpus order with no sorting.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if rng is None:
        for lo in range(0, len(examples), batch_size):
            yield collate(examples[lo : lo + batch_size])
        return
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    order = rng.permutation(len(examples))
    chunk = batch_size * max(1, bucket_batches)
    groups: list[list[int]] = []
    for lo in range(0, len(order), chunk):
        part = sorted(order[lo : lo + chunk], key=lambda i: len(examples[i].src))
        groups.extend(part[j : j + batch_size] for j in range(0, len(part), batch_size))
    for g in rng.permutation(len(groups)):
        yield collate([examples[i] for i in groups[g]])


def label_inventory(trees: Iterable[ParseTree | None]) -> list[str]:
    """Structural labels ordered by frequency, ties by first occurrence."""
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for tree in trees:
        if tree is None:
            continue
        for label in linearize(tree).labels:
            counts[label] += 1
            first.setdefault(label, len(first))
    return sorted(counts, key=lambda t: (-counts[t], first[t]))


def build_vocabularies(
    src_lines: Sequence[str],
    trees: Sequence[ParseTree | None] | None,
    tgt_lines: Sequence[str],
    variant: str,
    src_limit: int,
    tgt_limit: int,
) -> tuple[Vocabulary, Vocabulary, Vocabulary | None]:
    """Source, target and (if needed) label vocabularies for ``variant``."""
    labels = label_inventory(trees) if trees is not None else []
    src_reserved = labels if variant == "mixed" else ()
    src_vocab = build_vocab((s.split() for s in src_lines), src_limit, reserved=src_reserved)
    tgt_vocab = build_vocab((t.split() for t in tgt_lines), tgt_limit)
    label_vocab = Vocabulary(labels) if variant in ("parallel", "hierarchical") else None
    return src_vocab, tgt_vocab, label_vocab
