"""Synthetic parallel corpora generated from small tree grammars.

``generate_corpus`` produces English-like sources with parse trees and a
French-like target (adjectives after nouns, word-for-word lexicon,
numerals and relative clauses), together with gold word alignments.

``generate_boundary_corpus`` produces the syntax probe: each source is a
run of nouns split into two noun phrases at a point only the tree shows;
the target swaps the two phrases around a separator.  A model that only
sees words can at best guess the split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .treebank import ParseTree, to_bracketed

DETERMINERS = {"the": "le", "a": "un", "this": "ce", "every": "chaque"}
NOUNS = {
    "dog": "chien", "cat": "chat", "bird": "oiseau", "man": "homme", "woman": "femme",
    "child": "enfant", "house": "maison", "garden": "jardin", "car": "voiture", "book": "livre",
    "river": "riviere", "tree": "arbre", "city": "ville", "teacher": "professeur",
    "farmer": "fermier", "horse": "cheval", "boat": "bateau", "letter": "lettre",
}
PLURALS = {
    "dogs": "chiens", "cats": "chats", "birds": "oiseaux", "books": "livres",
    "trees": "arbres", "horses": "chevaux", "boats": "bateaux", "letters": "lettres",
}
ADJECTIVES = {
    "big": "grand", "small": "petit", "red": "rouge", "old": "vieux",
    "happy": "heureux", "green": "vert", "quiet": "calme", "strange": "etrange",
}
VERBS = {
    "sees": "voit", "likes": "aime", "finds": "trouve", "follows": "suit",
    "reads": "lit", "paints": "peint", "watches": "regarde", "carries": "porte",
}
PREPOSITIONS = {"near": "pres", "under": "sous", "with": "avec", "behind": "derriere"}
NUMERALS = {"two": "deux", "three": "trois", "four": "quatre", "five": "cinq"}
PRONOUNS = {"he": "il", "she": "elle"}
NAMES = [
    "alice", "bruno", "carla", "dmitri", "elena", "farid", "greta", "hugo", "ines", "jonas",
    "kofi", "lena", "marco", "nadia", "oskar", "priya", "quentin", "rosa", "sven", "tariq",
]


@dataclass
class ToyPair:
    tree: ParseTree
    source: list[str]
    target: list[str]
    alignment: set[tuple[int, int]] = field(default_factory=set)


class _Builder:
    """Accumulates source words, target words and links while recursing.

    Translations travel upward as lists of ``(target token, source index)``
    and are emitted once the sentence's target order is settled.
    """

    def __init__(self):
        self.src: list[str] = []
        self.tgt: list[str] = []
        self.links: set[tuple[int, int]] = set()

    def word(self, tag: str, table: dict[str, str], rng: np.random.Generator):
        keys = list(table)
        w = keys[int(rng.integers(len(keys)))]
        return self.fixed(tag, w, table[w])

    def fixed(self, tag: str, word: str, translation: str):
        j = len(self.src)
        self.src.append(word)
        return ParseTree(tag, word=word), [(translation, j)]

    def emit(self, pieces) -> None:
        for tok, j in pieces:
            self.links.add((j, len(self.tgt)))
            self.tgt.append(tok)


class ToyGrammar:
    """S -> NP VP; NP -> DT (JJ) NN (PP|CP) | QP NNS | NNP | PRP; VP -> VBZ NP (PP)."""

    def __init__(self, rng: np.random.Generator, max_depth: int = 2):
        self.rng = rng
        self.max_depth = max_depth

    def sentence(self) -> ToyPair:
        b = _Builder()
        np_node, np_tr = self.noun_phrase(b, 0, subject=True)
        vp_node, vp_tr = self.verb_phrase(b, 0)
        b.emit(np_tr + vp_tr)
        return ToyPair(ParseTree("S", [np_node, vp_node]), b.src, b.tgt, b.links)

    def noun_phrase(self, b: _Builder, depth: int, subject: bool = False):
        rng = self.rng
        roll = rng.random()
        if subject and roll < 0.1:
            leaf, tr = b.word("PRP", PRONOUNS, rng)
            return ParseTree("NP", [leaf]), tr
        if roll < 0.2:
            name = NAMES[min(int(rng.zipf(1.6)) - 1, len(NAMES) - 1)]
            leaf, tr = b.fixed("NNP", name, name)
            return ParseTree("NP", [leaf]), tr
        if roll < 0.32:
            num, num_tr = b.word("CD", NUMERALS, rng)
            noun, noun_tr = b.word("NNS", PLURALS, rng)
            return ParseTree("NP", [ParseTree("QP", [num]), noun]), num_tr + noun_tr
        det, tr = b.word("DT", DETERMINERS, rng)
        children = [det]
        adj_tr = []
        if rng.random() < 0.4:
            adj, adj_tr = b.word("JJ", ADJECTIVES, rng)
            children.append(adj)
        noun, noun_tr = b.word("NN", NOUNS, rng)
        children.append(noun)
        # adjectives follow the noun on the target side
        tr = tr + noun_tr + adj_tr
        if depth < self.max_depth:
            roll = rng.random()
            if roll < 0.2:
                pp, pp_tr = self.prep_phrase(b, depth + 1)
                return ParseTree("NP", [ParseTree("NP", children), pp]), tr + pp_tr
            if roll < 0.3:
                cp, cp_tr = self.clause(b, depth + 1)
                return ParseTree("NP", [ParseTree("NP", children), cp]), tr + cp_tr
        return ParseTree("NP", children), tr

    def prep_phrase(self, b: _Builder, depth: int):
        prep, tr = b.word("IN", PREPOSITIONS, self.rng)
        obj, obj_tr = self.noun_phrase(b, depth)
        return ParseTree("PP", [prep, obj]), tr + obj_tr

    def clause(self, b: _Builder, depth: int):
        rel, tr = b.fixed("WDT", "that", "qui")
        vp, vp_tr = self.verb_phrase(b, depth)
        return ParseTree("CP", [ParseTree("WHNP", [rel]), ParseTree("S", [vp])]), tr + vp_tr

    def verb_phrase(self, b: _Builder, depth: int):
        verb, tr = b.word("VBZ", VERBS, self.rng)
        obj, obj_tr = self.noun_phrase(b, depth + 1)
        children, tr = [verb, obj], tr + obj_tr
        if depth < self.max_depth and self.rng.random() < 0.25:
            pp, pp_tr = self.prep_phrase(b, depth + 1)
            children.append(pp)
            tr = tr + pp_tr
        return ParseTree("VP", children), tr


def generate_corpus(n: int, seed: int = 1, max_words: int = 20) -> list[ToyPair]:
    """``n`` distinct-or-not pairs of at most ``max_words`` source words."""
    rng = np.random.default_rng(seed)
    grammar = ToyGrammar(rng)
    out = []
    while len(out) < n:
        pair = grammar.sentence()
        if len(pair.source) <= max_words:
            out.append(pair)
    return out


BOUNDARY_NOUNS = dict(list(NOUNS.items())[:12])


def generate_boundary_corpus(n: int, seed: int = 1, max_phrase: int = 3) -> list[ToyPair]:
    """Two noun phrases of 1..``max_phrase`` nouns each; target ``NP2 de NP1``.

    The split point is drawn independently of the words, so the word string
    alone leaves it ambiguous.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        b = _Builder()
        phrases, translations = [], []
        for size in rng.integers(1, max_phrase + 1, size=2):
            leaves, tr = [], []
            for _ in range(int(size)):
                leaf, piece = b.word("NN", BOUNDARY_NOUNS, rng)
                leaves.append(leaf)
                tr += piece
            phrases.append(ParseTree("NP", leaves))
            translations.append(tr)
        b.emit(translations[1])
        b.tgt.append("de")
        b.emit(translations[0])
        out.append(ToyPair(ParseTree("S", phrases), b.src, b.tgt, b.links))
    return out


def write_corpus(pairs, directory, prefix: str) -> dict[str, Path]:
    """Write ``prefix.{src,tree,tgt,align}`` files; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {k: directory / f"{prefix}.{k}" for k in ("src", "tree", "tgt", "align")}
    with open(paths["src"], "w", encoding="utf-8") as fs, open(paths["tree"], "w", encoding="utf-8") as ft, open(
        paths["tgt"], "w", encoding="utf-8"
    ) as fg, open(paths["align"], "w", encoding="utf-8") as fa:
        for p in pairs:
            fs.write(" ".join(p.source) + "\n")
            ft.write(to_bracketed(p.tree) + "\n")
            fg.write(" ".join(p.target) + "\n")
            fa.write(" ".join(f"{j}-{i}" for j, i in sorted(p.alignment)) + "\n")
    return paths


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def write_bundled(directory=None) -> None:
    """Regenerate the corpora shipped under ``synmt/data``."""
    directory = Path(directory) if directory is not None else data_dir()
    toy = generate_corpus(2400, seed=11)
    write_corpus(toy[:2000], directory / "toy", "train")
    write_corpus(toy[2000:2200], directory / "toy", "dev")
    write_corpus(toy[2200:], directory / "toy", "test")
    probe = generate_boundary_corpus(2400, seed=12)
    write_corpus(probe[:2000], directory / "probe", "train")
    write_corpus(probe[2000:2200], directory / "probe", "dev")
    write_corpus(probe[2200:], directory / "probe", "test")


if __name__ == "__main__":
    write_bundled()
