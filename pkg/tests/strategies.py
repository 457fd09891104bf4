"""Hypothesis strategies shared across test modules."""

from hypothesis import strategies as st

from synmt.treebank import ParseTree

PHRASES = ["S", "NP", "VP", "PP", "QP", "CP", "ADJP", "SBAR"]
TAGS = ["NN", "NNS", "DT", "JJ", "VBZ", "IN", "CD", "PRP", "NNP"]
WORDS = ["dog", "cat", "the", "a", "runs", "in", "two", "he", "paris", "big"]


def preterminal():
    return st.builds(lambda t, w: ParseTree(t, word=w), st.sampled_from(TAGS), st.sampled_from(WORDS))


def trees(max_leaves: int = 12):
    return st.recursive(
        preterminal(),
        lambda kids: st.builds(
            lambda label, children: ParseTree(label, children),
            st.sampled_from(PHRASES),
            st.lists(kids, min_size=1, max_size=3),
        ),
        max_leaves=max_leaves,
    )
