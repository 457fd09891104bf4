"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

from typing import Any, Sequence

from .treebank import ParseTree, TreeParseError, parse_bracketed


def check_sentences(X: Any, name: str = "X") -> list[str]:
    """A non-empty sequence of non-empty whitespace-tokenized strings.

    Token lists are joined with single spaces.
    """
    if isinstance(X, str):
        raise TypeError(f"{name} must be a sequence of sentences, not a single string")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a sequence of sentences") from None
    if not items:
        raise ValueError(f"{name} is empty")
    out = []
    for i, s in enumerate(items):
        if not isinstance(s, str):
            if isinstance(s, Sequence) and all(isinstance(t, str) for t in s):
                s = " ".join(s)
            else:
                raise TypeError(f"{name}[{i}] must be a string or a list of tokens")
        if not s.split():
            raise ValueError(f"{name}[{i}] is empty")
        out.append(" ".join(s.split()))
    return out


def check_trees(trees: Any, sentences: Sequence[str], name: str = "trees") -> list[ParseTree]:
    """Parse bracketed strings if needed and check leaves against ``sentences``."""
    items = list(trees)
    if len(items) != len(sentences):
        raise ValueError(f"{name} has {len(items)} entries for {len(sentences)} sentences")
    out = []
    for i, (t, s) in enumerate(zip(items, sentences)):
        if isinstance(t, str):
            try:
                t = parse_bracketed(t)
            except TreeParseError as e:
                raise ValueError(f"{name}[{i}]: {e}") from None
        elif not isinstance(t, ParseTree):
            raise TypeError(f"{name}[{i}] must be a bracketed string or a ParseTree")
        if t.leaves() != s.split():
            raise ValueError(f"{name}[{i}]: leaves do not match the sentence")
        out.append(t)
    return out


def check_parallel(X, y) -> tuple[list[str], list[str]]:
    X = check_sentences(X, "X")
    y = check_sentences(y, "y")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} sentences but y has {len(y)}")
    return X, y


def check_positive_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value
