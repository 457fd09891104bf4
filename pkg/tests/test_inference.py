import dataclasses
import itertools

import numpy as np
import pytest
from copytask import copy_state, copy_task
from hypothesis import given, settings
from hypothesis import strategies as st

from synmt.inference import (
    beam_search,
    extract_alignment,
    force_decode,
    force_decode_batch,
    force_decode_corpus,
    format_pharaoh,
    greedy_decode,
    search,
    translate,
)
from synmt.model import sentence_loss
from synmt.training import TrainConfig, train


class TableModel:
    """Three-symbol toy decoder whose log-probs depend on the whole prefix."""

    def __init__(self, seed, vocab=3):
        self.vocab = vocab
        self.rng = np.random.default_rng(seed)
        self.table = {}

    def logp(self, prefix):
        if prefix not in self.table:
            z = self.rng.normal(scale=2.0, size=self.vocab)
            self.table[prefix] = z - np.log(np.exp(z).sum())
        return self.table[prefix]


class TableState:
    def __init__(self, model, prefixes):
        self.model, self.prefixes = model, prefixes

    def select(self, rows):
        return TableState(self.model, [self.prefixes[r] for r in rows])

    @staticmethod
    def step(state, y_prev):
        prefixes = [p + (int(y),) if p is not None else () for p, y in zip(state.prefixes, y_prev)]
        logp = np.stack([state.model.logp(p) for p in prefixes])
        return TableState(state.model, prefixes), logp, np.ones((len(prefixes), 1))


def run_table(model, beam, max_len=3, eos=2):
    return search(TableState.step, TableState(model, [None]), beam, max_len, eos=eos)[0]


def enumerate_best(model, max_len=3, eos=2):
    """Score every output of length <= max_len: finished ones, plus unfinished ones of full length."""
    best = None
    for n in range(1, max_len + 1):
        for seq in itertools.product(range(model.vocab), repeat=n):
            if eos in seq[:-1] or (seq[-1] != eos and n < max_len):
                continue
            score = sum(model.logp(seq[:i])[seq[i]] for i in range(n))
            if best is None or score / n > best[1]:
                best = (list(seq), score / n)
    return best


class TestSearch:
    @pytest.mark.parametrize("seed", range(20))
    def test_beam_finds_exhaustive_optimum(self, seed):
        model = TableModel(seed)
        want, want_score = enumerate_best(model)
        got = run_table(model, beam=10)
        assert got.tokens == want
        assert got.normalized_score == pytest.approx(want_score, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 9))
    def test_exhaustive_beam_never_worse(self, seed, beam):
        model = TableModel(seed)
        assert run_table(model, 10).normalized_score >= run_table(model, beam).normalized_score - 1e-12

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            run_table(TableModel(0), beam=0)
        with pytest.raises(ValueError):
            run_table(TableModel(0), beam=2, max_len=0)

    def test_unfinished_hypothesis_returned_at_max_len(self):
        model = TableModel(0)
        model.table = {(): np.log([0.9, 0.05, 0.05]), (0,): np.log([0.9, 0.05, 0.05])}
        hyp = run_table(model, beam=1, max_len=2)
        assert hyp.tokens == [0, 0] and not hyp.finished and hyp.words() == [0, 0]


@pytest.fixture(scope="module")
def tiny_toy():
    """A randomly initialized baseline model plus 100 fixture sentences from the bundled toy test split."""
    from synmt import config, pipeline as pl
    from synmt.toy import data_dir

    cfg = config.load(data_dir() / "toy" / "config.json", {"variant": "baseline", "hidden_dim": 16, "word_emb_dim": 8})
    corpus = pl.load_corpus(cfg.test)
    vocabs = pl.build_vocabs(cfg, corpus)
    params = pl.new_train_state(cfg, vocabs).params
    rng = np.random.default_rng(0)
    for t in params:
        t.data[...] = rng.normal(scale=0.5, size=t.shape)
    return params, pl.decoding_examples("baseline", corpus, vocabs, with_target=True)[:100], vocabs


class TestModelDecoding:
    def test_beam_one_is_greedy(self, tiny_toy):
        params, examples, _ = tiny_toy
        for ex in examples:
            b, g = beam_search(params, ex, beam=1), greedy_decode(params, ex)
            assert b.tokens == g.tokens
            assert b.score == pytest.approx(g.score, rel=1e-12)

    def test_deterministic(self, tiny_toy):
        params, examples, vocabs = tiny_toy
        a = translate(params, examples[:10], vocabs.tgt.itos, beam=4)
        b = translate(params, examples[:10], vocabs.tgt.itos, beam=4)
        assert [(t.tokens, t.alignment, t.score) for t in a] == [(t.tokens, t.alignment, t.score) for t in b]

    def test_beam_scores_at_least_greedy_when_exhaustive(self, tiny_toy):
        params, examples, _ = tiny_toy
        ex = examples[0]
        g = beam_search(params, ex, beam=1, max_len=2)
        b = beam_search(params, ex, beam=len(params["out.b"].data) ** 2, max_len=2)
        assert b.normalized_score >= g.normalized_score

    def test_attention_rows_are_distributions(self, tiny_toy):
        params, examples, _ = tiny_toy
        hyp = beam_search(params, examples[1], beam=3)
        att = np.stack(hyp.attention)
        assert att.shape == (len(hyp.tokens), len(examples[1].src))
        np.testing.assert_allclose(att.sum(1), 1.0, atol=1e-12)


class TestForcedDecoding:
    def test_log_prob_matches_loss(self, tiny):
        p = tiny.params("hierarchical", seed=4)
        ex = tiny.example("hierarchical")
        res = force_decode(p, ex)
        assert res.log_prob == pytest.approx(-sentence_loss(p, ex).item(), rel=1e-12)
        assert res.attention.shape == (len(ex.tgt), len(ex.src))
        np.testing.assert_allclose(res.attention.sum(1), 1.0, atol=1e-12)

    def test_batching_does_not_change_results(self, tiny_toy):
        params, examples, _ = tiny_toy
        batched = force_decode_corpus(params, examples[:12], batch_size=5)
        for ex, res in zip(examples[:12], batched):
            alone = force_decode_batch(params, [ex])[0]
            assert res.log_prob == pytest.approx(alone.log_prob, rel=1e-12)
            np.testing.assert_allclose(res.attention, alone.attention, rtol=1e-10, atol=1e-14)

    def test_explicit_reference(self, tiny):
        p = tiny.params("baseline", seed=5)
        ex = tiny.example("baseline")
        a = force_decode(p, ex, reference=ex.tgt[:-1])
        b = force_decode(p, ex)
        assert a.log_prob == b.log_prob
        with pytest.raises(ValueError):
            force_decode(p, ex, reference=[])
        with pytest.raises(ValueError):
            force_decode(p, dataclasses.replace(ex, tgt=[]))


@pytest.fixture(scope="module")
def copy_model():
    exs, sv, tv = copy_task()
    state = copy_state(sv, tv)
    train(state, exs, TrainConfig(epochs=30, batch_size=2, clip_norm=5.0), progress=None)
    return state.params, exs


def test_copy_task_attention_is_diagonal(copy_model):
    params, exs = copy_model
    links = total = 0
    for ex, res in zip(exs, force_decode_corpus(params, exs)):
        n = ex.n_words
        al = extract_alignment(res.attention, n, n)
        links += sum(1 for s, t in al if s == t)
        total += n
    assert links / total >= 0.9


class TestAlignmentExtraction:
    def test_one_hot(self):
        att = np.eye(4)[[2, 0, 1, 3]]
        assert extract_alignment(att, 3, 3) == {(2, 0), (0, 1), (1, 2)}

    def test_uniform_ties_go_to_first_word(self):
        assert extract_alignment(np.full((3, 5), 0.2), 4, 3) == {(0, 0), (0, 1), (0, 2)}

    def test_eos_column_never_chosen(self):
        att = np.array([[0.1, 0.2, 0.7], [0.3, 0.6, 0.1]])
        assert extract_alignment(att, 2) == {(1, 0), (1, 1)}
        assert extract_alignment(att, 0) == set()

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    def test_links_within_bounds(self, n_src, n_tgt, seed):
        rng = np.random.default_rng(seed)
        att = rng.dirichlet(np.ones(n_src + 3), size=n_tgt + 1)
        links = extract_alignment(att, n_src, n_tgt)
        assert len(links) == n_tgt
        assert all(0 <= s < n_src and 0 <= t < n_tgt for s, t in links)

    def test_pharaoh_format(self):
        assert format_pharaoh({(1, 0), (0, 1), (0, 0)}) == "0-0 0-1 1-0"
        assert format_pharaoh(set()) == ""
