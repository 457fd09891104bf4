import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from nltk.translate.bleu_score import corpus_bleu

from synmt.corpus import UNK, Vocabulary
from synmt.evaluation import (
    CONT,
    DIS,
    NON_UNK,
    UN,
    DiagnosticReport,
    GoldAlignment,
    aer,
    bleu,
    bleu_by_length,
    bleu_stats,
    bucket_label,
    continuity_label,
    over_translation,
    parse_gold_line,
    parse_pharaoh,
    phrase_continuity,
    rare_word_label,
    rare_word_report,
    read_gold,
    rot,
)
from synmt.toy import data_dir
from synmt.treebank import PhraseSpan


def perturb(tokens, rng):
    toks = list(tokens)
    for _ in range(rng.integers(0, 3)):
        op = rng.integers(3)
        i = int(rng.integers(len(toks)))
        if op == 0 and len(toks) > 1:
            del toks[i]
        elif op == 1:
            toks.insert(i, str(rng.choice(["le", "chat", "x", "de"])))
        else:
            j = int(rng.integers(len(toks)))
            toks[i], toks[j] = toks[j], toks[i]
    return toks


def bleu_fixture():
    """20 toy references (some with a second reference) and noisy hypotheses."""
    lines = (data_dir() / "toy" / "test.tgt").read_text().splitlines()[:40]
    rng = np.random.default_rng(2024)
    hyps, refs = [], []
    for k in range(20):
        ref = lines[k].split()
        ref_sets = [ref] + ([perturb(lines[20 + k].split(), rng)] if k % 3 == 0 else [])
        hyps.append(perturb(ref, rng))
        refs.append(ref_sets)
    return hyps, refs


@pytest.fixture(scope="module")
def fixture_corpus():
    return bleu_fixture()


class TestBleu:
    def test_matches_independent_implementation(self, fixture_corpus):
        hyps, refs = fixture_corpus
        ours = bleu(hyps, refs)
        theirs = corpus_bleu(refs, hyps)
        assert 0.2 < ours < 0.99
        assert abs(ours - theirs) <= 0.001

    def test_identical_is_one_and_disjoint_is_zero(self):
        assert bleu(["a b c d e"], [["a b c d e"]]) == 1.0
        assert bleu(["a b c d e"], [["v w x y z"]]) == 0.0

    def test_case_insensitive_by_default(self):
        assert bleu(["The Cat sat on mats"], [["the cat sat on mats"]]) == 1.0
        assert bleu(["The Cat sat on mats"], [["the cat sat on mats"]], case_insensitive=False) == 0.0

    def test_brevity_penalty_uses_closest_reference(self):
        score = bleu(["a b c d"], [["a b c d e f", "a b c d x"]])
        assert score == pytest.approx(math.exp(1 - 5 / 4))

    def test_errors(self):
        with pytest.raises(ValueError):
            bleu([], [])
        with pytest.raises(ValueError):
            bleu(["a"], [])
        with pytest.raises(ValueError):
            bleu(["a"], [[]])

    def test_permutation_invariant(self, fixture_corpus):
        hyps, refs = fixture_corpus
        order = np.random.default_rng(0).permutation(len(hyps))
        assert bleu([hyps[i] for i in order], [refs[i] for i in order]) == pytest.approx(bleu(hyps, refs), abs=1e-15)

    def test_removing_a_reference_never_helps(self, fixture_corpus):
        hyps, refs = fixture_corpus
        assert bleu(hyps, [r[:1] for r in refs]) <= bleu(hyps, refs)


class TestBleuByLength:
    def test_single_bucket_equals_corpus(self, fixture_corpus):
        hyps, refs = fixture_corpus
        out = bleu_by_length(hyps, refs, [5] * len(hyps))
        assert out == {"(0,10]": pytest.approx(bleu(hyps, refs))}

    def test_buckets_recompose_corpus_counts(self, fixture_corpus):
        hyps, refs = fixture_corpus
        lengths = [len(r[0]) for r in refs]
        short = [i for i, n in enumerate(lengths) if n <= 10]
        long = [i for i, n in enumerate(lengths) if n > 10]
        assert short and long
        a = bleu_stats([hyps[i] for i in short], [refs[i] for i in short])
        b = bleu_stats([hyps[i] for i in long], [refs[i] for i in long])
        assert a + b == bleu_stats(hyps, refs)
        out = bleu_by_length(hyps, refs, lengths, edges=[10])
        assert list(out) == ["(0,10]", ">10"]
        assert out[">10"] == pytest.approx(bleu([hyps[i] for i in long], [refs[i] for i in long]))

    def test_empty_bucket_is_absent(self):
        out = bleu_by_length(["a b c d"], [["a b c d"]], [3], edges=[10, 20])
        assert out == {"(0,10]": 1.0}

    def test_labels_and_bad_edges(self):
        assert [bucket_label(n, [10, 20]) for n in (1, 10, 11, 20, 21)] == ["(0,10]"] * 2 + ["(10,20]"] * 2 + [">20"]
        with pytest.raises(ValueError):
            bleu_by_length(["a"], [["a"]], [1], edges=[20, 10])


def brute_aer(pairs):
    a_s = a_p = n = 0
    for a, s, p in pairs:
        for link in a:
            a_s += link in s
            a_p += link in p or link in s
        n += len(a) + len(s)
    return 1 - (a_s + a_p) / n if n else 0.0


class TestAer:
    def test_hand_case(self):
        gold = GoldAlignment({(1, 1)}, {(1, 1), (2, 2)})
        assert aer({(1, 1), (2, 3)}, gold) == pytest.approx(1 / 3)

    def test_perfect_and_disjoint(self):
        g = GoldAlignment({(0, 0), (1, 1)}, set())
        assert aer({(0, 0), (1, 1)}, g) == 0.0
        assert aer({(0, 1), (1, 0)}, g) == 1.0

    def test_empty_is_zero_with_warning(self, caplog):
        assert aer([set()], [GoldAlignment(set(), set())]) == 0.0
        assert "no links" in caplog.text

    def test_corpus_sums_before_dividing(self):
        g1, g2 = GoldAlignment({(0, 0)}, set()), GoldAlignment({(0, 0), (1, 1), (2, 2)}, set())
        got = aer([{(0, 0)}, {(5, 5)}], [g1, g2])
        assert got == pytest.approx(1 - 2 / 6)

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            aer([set(), set()], [GoldAlignment(set(), set())])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(*(st.sets(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=6),) * 3), min_size=1, max_size=4))
    def test_matches_brute_force(self, raw):
        hyps = [a for a, _, _ in raw]
        golds = [GoldAlignment(s, p) for _, s, p in raw]
        got = aer(hyps, golds)
        assert got == pytest.approx(brute_aer(raw), abs=1e-12)
        assert 0.0 <= got <= 1.0
        sure = [g.sure for g in golds]
        if any(sure):
            assert aer(sure, [GoldAlignment(x, x) for x in sure]) == 0.0

    def test_gold_parsing(self):
        g = parse_gold_line("0-0 1?2 2-1")
        assert g.sure == {(0, 0), (2, 1)} and g.possible == {(0, 0), (1, 2), (2, 1)}
        assert parse_pharaoh("0-1 3-2") == {(0, 1), (3, 2)}
        with pytest.raises(ValueError, match="line 2"):
            read_gold(["0-0", "a-b"])


def brute_continuity(a, b, links):
    """Check contiguity by testing every integer between min and max."""
    ts = {t for s, t in links if a <= s <= b}
    if not ts:
        return UN
    return CONT if all(k in ts for k in range(min(ts), max(ts) + 1)) else DIS


class TestContinuity:
    def test_definition(self):
        assert continuity_label((0, 1), {(0, 5), (1, 6)}) == CONT
        assert continuity_label((0, 1), {(0, 5), (1, 7)}) == DIS
        assert continuity_label((0, 1), {(2, 5)}) == UN
        assert continuity_label((0, 0), {(0, 4), (0, 4)}) == CONT

    def test_random_fixtures_vs_brute_force(self):
        rng = np.random.default_rng(3)
        spans_all, links_all = [], []
        expected = {}
        for _ in range(100):
            n_src, n_tgt = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            links = {(int(rng.integers(n_src)), int(rng.integers(n_tgt))) for _ in range(rng.integers(0, 10))}
            spans = []
            for _ in range(rng.integers(1, 4)):
                a = int(rng.integers(n_src))
                b = int(rng.integers(a, n_src))
                cat = str(rng.choice(["NP", "PP", "QP"]))
                spans.append(PhraseSpan(cat, a, b))
                want = brute_continuity(a, b, links)
                assert continuity_label(spans[-1], links) == want
                for key in (cat, "ALL"):
                    expected.setdefault(key, []).append(want)
            spans_all.append(spans)
            links_all.append(links)
        table = phrase_continuity(spans_all, links_all)
        assert list(table) == ["NP", "PP", "QP", "ALL"]
        for key, labels in expected.items():
            row = table[key]
            assert row["count"] == len(labels)
            for lab in (CONT, DIS, UN):
                assert row[lab] == pytest.approx(100 * labels.count(lab) / len(labels))
            assert sum(row[k] for k in (CONT, DIS, UN)) == pytest.approx(100.0, abs=0.1)

    def test_category_filter(self):
        spans = [[PhraseSpan("NP", 0, 0), PhraseSpan("VP", 0, 1)]]
        table = phrase_continuity(spans, [{(0, 0)}], categories=["NP"])
        assert list(table) == ["NP", "ALL"] and table["ALL"]["count"] == 1


class TestRot:
    def test_hong_kong(self):
        assert over_translation("hong kong hong kong".split()) == 2
        assert over_translation("a b c".split()) == 0
        assert over_translation([]) == 0

    def test_five_word_corpus_by_enumeration(self):
        tags = [["NR", "VV", "NN"], ["CD", "NN"]]
        targets = [["hong", "kong", "hong", "kong", "says", "says", "news"], ["two", "two", "two", "cats"]]
        links = [
            {(0, 0), (0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6)},
            {(0, 0), (0, 1), (0, 2), (1, 3)},
        ]
        out = rot(tags, links, targets, {"NR": ["NR"], "NN": ["NN"], "VV": ["VV"], "CD": ["CD"]})
        # t per word: hong-kong 2, says 1, news 0, two 2, cats 0
        assert out["ALL"] == {"t": 5, "e": 11, "uniq": 6, "words": 5, "rot": 1.0}
        assert out["NR"]["rot"] == 2.0 and out["VV"]["rot"] == 1.0 and out["CD"]["rot"] == 2.0
        assert out["NN"] == {"t": 0, "e": 2, "uniq": 2, "words": 2, "rot": 0.0}
        assert list(out) == ["CD", "NN", "NR", "VV", "ALL"]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2**31))
    def test_bijection_gives_zero(self, n, seed):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        links = {(i, int(perm[i])) for i in range(n)}
        targets = [str(w) for w in rng.integers(0, 3, size=n)]
        out = rot([["NN"] * n], [links], [targets])
        assert out["ALL"]["rot"] == 0.0 and out["NN"]["rot"] == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
    def test_non_negative(self, n_src, n_tgt, seed):
        rng = np.random.default_rng(seed)
        links = {(int(rng.integers(n_src)), int(rng.integers(n_tgt))) for _ in range(8)}
        targets = [str(w) for w in rng.integers(0, 3, size=n_tgt)]
        out = rot([["DT"] * n_src], [links], [targets])
        assert all(r["rot"] >= 0 for r in out.values())


class TestRareWords:
    def test_decision_rule(self):
        assert rare_word_label([]) == UN
        assert rare_word_label([UNK]) == "UNK"
        assert rare_word_label([UNK, "bank"]) == NON_UNK

    def test_recount_on_random_fixtures(self):
        rng = np.random.default_rng(9)
        vocab = Vocabulary(["a", "b", "c"])
        words_pool = ["a", "b", "c", "x", "y", "z"]
        tag_pool = ["NN", "CD", "VBZ", "JJ"]
        tgt_pool = ["u", "v", UNK]
        srcs, tags, links, tgts = [], [], [], []
        expected = {"ALL": [], "NN": [], "CD": [], "VV": []}
        for _ in range(100):
            n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            s = [str(w) for w in rng.choice(words_pool, n)]
            t = [str(w) for w in rng.choice(tag_pool, n)]
            e = [str(w) for w in rng.choice(tgt_pool, m)]
            al = {(int(rng.integers(n)), int(rng.integers(m))) for _ in range(rng.integers(0, 6))}
            srcs.append(s), tags.append(t), links.append(al), tgts.append(e)
            for i, w in enumerate(s):
                if w in ("a", "b", "c"):
                    continue
                aligned = [e[j] for (si, j) in al if si == i]
                lab = UN if not aligned else ("UNK" if set(aligned) == {UNK} else NON_UNK)
                expected["ALL"].append(lab)
                group = {"NN": "NN", "CD": "CD", "VBZ": "VV"}.get(t[i])
                if group:
                    expected[group].append(lab)
        out = rare_word_report(srcs, tags, vocab, links, tgts)
        assert set(out) == {k for k, v in expected.items() if v}
        for key, labels in expected.items():
            if not labels:
                continue
            assert out[key]["count"] == len(labels)
            for lab in (NON_UNK, "UNK", UN):
                assert out[key][lab] == pytest.approx(100 * labels.count(lab) / len(labels))
            assert sum(out[key][k] for k in (NON_UNK, "UNK", UN)) == pytest.approx(100.0, abs=0.1)


class TestReport:
    def make(self):
        return DiagnosticReport(
            bleu=0.5,
            bleu_by_length={"(0,10]": 0.6, ">10": 0.4},
            aer=0.25,
            continuity={"NP": {CONT: 50.0, DIS: 25.0, UN: 25.0, "count": 4}},
            rot={"ALL": {"t": 1, "e": 3, "uniq": 2, "words": 2, "rot": 0.5}},
            rare_words={"ALL": {NON_UNK: 100.0, "UNK": 0.0, UN: 0.0, "count": 1}},
        )

    def test_json_round_trip(self):
        r = self.make()
        text = r.to_json()
        assert DiagnosticReport.from_json(text) == r
        assert list(json.loads(text)) == sorted(json.loads(text))

    def test_table_mentions_every_section(self):
        table = self.make().table()
        for piece in ("BLEU  50.00", "AER   25.00", "(0,10]", "NP", "Cont.", "non-UNK", "ROT"):
            assert piece in table
