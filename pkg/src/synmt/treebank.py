"""Bracketed constituency trees and their linear forms.

A tree such as ``(S (NP (PRP I)) (VP (VBP love) (NP (NNS dogs))))`` is read
into :class:`ParseTree`, flattened depth-first into a structural label
sequence (``S NP PRP VP VBP NP NNS``) whose POS positions anchor each word,
or interleaved with its words into a single mixed token stream.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

CLOSE_SUFFIX = ")"


class TreeParseError(ValueError):
    """Malformed bracketed tree; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass
class ParseTree:
    label: str
    children: list["ParseTree"] = field(default_factory=list)
    word: str | None = None

    @property
    def is_preterminal(self) -> bool:
        return self.word is not None

    def leaves(self) -> list[str]:
        return [node.word for node in self.preterminals()]

    def preterminals(self) -> Iterator["ParseTree"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_preterminal:
                yield node
            else:
                stack.extend(reversed(node.children))

    def internal_nodes(self) -> Iterator["ParseTree"]:
        """All labelled nodes, depth-first pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __str__(self) -> str:
        return to_bracketed(self)


@dataclass
class LinearizedTree:
    labels: list[str]
    word_to_label: list[int]
    words: list[str]


@dataclass
class MixedSequence:
    tokens: list[str]
    word_positions: list[int]


@dataclass(frozen=True)
class PhraseSpan:
    category: str
    start: int
    end: int


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def normalize_label(label: str) -> str:
    """Strip functional tags and indices: ``NP-SBJ-1`` -> ``NP``, ``NP=2`` -> ``NP``.

    Labels that start with a hyphen (``-NONE-``, ``-LRB-``) are kept whole.
    """
    if label.startswith("-"):
        return label
    return re.split(r"[-=]", label, maxsplit=1)[0] or label


def parse_bracketed(line: str, strip_functions: bool = True) -> ParseTree:
    """Read one PTB-style tree.

    An unlabelled or ``ROOT``/``TOP`` outer wrapper with a single child is
    removed.  Raises :class:`TreeParseError` with the offending offset.
    """
    text = line.strip()
    if not text:
        raise TreeParseError("empty tree", 0)
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(line)]
    if tokens[0][0] != "(":
        raise TreeParseError(f"expected '(' but found {tokens[0][0]!r}", tokens[0][1])
    # explicit stack of open nodes: [label, children, word, offset]
    stack: list[list] = []
    tree: ParseTree | None = None
    pos = 0
    while pos < len(tokens):
        tok, off = tokens[pos]
        if tree is not None:
            raise TreeParseError("trailing input after tree", off)
        if tok == "(":
            if stack and stack[-1][2] is not None:
                raise TreeParseError("preterminal with both a word and children", off)
            label = ""
            if pos + 1 < len(tokens) and tokens[pos + 1][0] not in "()":
                label = tokens[pos + 1][0]
                pos += 1
            stack.append([label, [], None, off])
        elif tok == ")":
            if not stack:
                raise TreeParseError("unbalanced brackets: unexpected ')'", off)
            label, children, word, _ = stack.pop()
            if not label and not (len(children) == 1 and word is None):
                raise TreeParseError("missing node label", off)
            if word is None and not children:
                raise TreeParseError(f"empty constituent {label!r}", off)
            if strip_functions:
                label = normalize_label(label)
            done = ParseTree(label, children, word)
            if stack:
                stack[-1][1].append(done)
            else:
                tree = done
        else:
            if not stack:
                raise TreeParseError(f"unexpected token {tok!r}", off)
            top = stack[-1]
            if top[1] or top[2] is not None:
                raise TreeParseError(f"unexpected token {tok!r}", off)
            top[2] = tok
        pos += 1
    if tree is None:
        raise TreeParseError("unbalanced brackets: missing ')'", len(line))
    while tree.word is None and len(tree.children) == 1 and tree.label in ("", "ROOT", "TOP"):
        tree = tree.children[0]
    if not tree.label:
        raise TreeParseError("missing node label", 0)
    return tree


def to_bracketed(tree: ParseTree) -> str:
    if tree.is_preterminal:
        return f"({tree.label} {tree.word})"
    return f"({tree.label} " + " ".join(to_bracketed(c) for c in tree.children) + ")"


def read_trees(lines: Iterable[str]) -> list[ParseTree | None]:
    """Parse a tree file; unparsable lines become ``None`` with a warning."""
    out: list[ParseTree | None] = []
    for lineno, line in enumerate(lines, 1):
        try:
            out.append(parse_bracketed(line))
        except TreeParseError as exc:
            logger.warning("tree line %d skipped: %s", lineno, exc)
            out.append(None)
    return out


def linearize(tree: ParseTree, closing: bool = False) -> LinearizedTree:
    """Depth-first label sequence plus each word's POS-tag position.

    With ``closing=True`` a ``LABEL)`` token is emitted when each phrase
    (non-preterminal) node closes.
    """
    labels: list[str] = []
    word_to_label: list[int] = []
    words: list[str] = []

    def visit(node: ParseTree) -> None:
        labels.append(node.label)
        if node.is_preterminal:
            word_to_label.append(len(labels) - 1)
            words.append(node.word)
            return
        for child in node.children:
            visit(child)
        if closing:
            labels.append(node.label + CLOSE_SUFFIX)

    _walk(tree, visit)
    return LinearizedTree(labels, word_to_label, words)


def build_mixed(tree: ParseTree, closing: bool = False) -> MixedSequence:
    """Labels and words interleaved depth-first; each word follows its POS tag."""
    tokens: list[str] = []
    word_positions: list[int] = []

    def visit(node: ParseTree) -> None:
        tokens.append(node.label)
        if node.is_preterminal:
            tokens.append(node.word)
            word_positions.append(len(tokens) - 1)
            return
        for child in node.children:
            visit(child)
        if closing:
            tokens.append(node.label + CLOSE_SUFFIX)

    _walk(tree, visit)
    return MixedSequence(tokens, word_positions)


def _walk(tree: ParseTree, visit) -> None:
    # deep unary chains on long sentences can exceed the default limit
    import sys

    depth = _depth(tree)
    if depth + 50 > sys.getrecursionlimit():
        sys.setrecursionlimit(depth + 200)
    visit(tree)


def _depth(tree: ParseTree) -> int:
    best = 0
    stack = [(tree, 1)]
    while stack:
        node, d = stack.pop()
        best = max(best, d)
        stack.extend((c, d + 1) for c in node.children)
    return best


def extract_spans(tree: ParseTree, categories: Iterable[str]) -> list[PhraseSpan]:
    """Word ranges (inclusive) of every node whose label is in ``categories``."""
    wanted = set(categories)
    spans: list[PhraseSpan] = []
    counter = 0

    def visit(node: ParseTree) -> tuple[int, int]:
        nonlocal counter
        if node.is_preterminal:
            start = end = counter
            counter += 1
        else:
            bounds = [visit(c) for c in node.children]
            start, end = bounds[0][0], bounds[-1][1]
        if node.label in wanted:
            spans.append(PhraseSpan(node.label, start, end))
        return start, end

    _walk(tree, visit)
    spans.sort(key=lambda s: (s.start, -s.end))
    return spans


def pos_tags(tree: ParseTree) -> list[str]:
    return [node.label for node in tree.preterminals()]
