import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from synmt.estimator import SyntaxNMT
from synmt.toy import data_dir
from synmt.validation import check_parallel, check_positive_int, check_sentences, check_trees

I_LOVE_DOGS = "(S (NP (PRP I)) (VP (VBP love) (NP (NNS dogs))))"


def toy(n, split="train"):
    d = data_dir() / "toy"
    read = lambda ext: (d / f"{split}.{ext}").read_text().splitlines()[:n]
    return read("src"), read("tgt"), read("tree")


SMALL = dict(word_emb_dim=8, hidden_dim=12, label_emb_dim=4, label_hidden_dim=4, epochs=2, beam=2)


class TestValidation:
    def test_sentences(self):
        assert check_sentences(["a  b", ["c", "d"]]) == ["a b", "c d"]
        with pytest.raises(TypeError):
            check_sentences("a b")
        with pytest.raises(ValueError, match=r"X\[1\]"):
            check_sentences(["a", "  "])
        with pytest.raises(ValueError):
            check_sentences([])
        with pytest.raises(TypeError):
            check_sentences([3])

    def test_parallel(self):
        with pytest.raises(ValueError, match="2 sentences but y has 1"):
            check_parallel(["a", "b"], ["c"])

    def test_trees(self):
        (t,) = check_trees([I_LOVE_DOGS], ["I love dogs"])
        assert t.label == "S"
        with pytest.raises(ValueError, match="leaves"):
            check_trees([I_LOVE_DOGS], ["I love cats"])
        with pytest.raises(ValueError, match=r"trees\[0\]"):
            check_trees(["(S (NP"], ["x"])
        with pytest.raises(ValueError):
            check_trees([], ["x"])

    def test_positive_int(self):
        assert check_positive_int(3, "n") == 3
        for bad in (0, -1, 2.0, True):
            with pytest.raises(ValueError):
                check_positive_int(bad, "n")


class TestEstimator:
    def test_clone_and_params(self):
        est = SyntaxNMT(variant="mixed", hidden_dim=7)
        c = clone(est)
        assert c.get_params() == est.get_params() and c is not est

    def test_fit_predict_score(self):
        X, y, trees = toy(60)
        est = SyntaxNMT(variant="parallel", **SMALL).fit(X, y, trees)
        assert est.loss_curve_.shape == (2,) and est.n_updates_ == 2 * int(np.ceil(60 / 16))
        out = est.predict(X[:5], trees[:5])
        assert len(out) == 5 and all(isinstance(s, str) for s in out)
        links = est.align(X[:5], trees[:5])
        assert all(0 <= s < len(X[i].split()) for i, l in enumerate(links) for s, _ in l)
        assert 0.0 <= est.score(X[:20], y[:20], trees[:20]) <= 1.0

    def test_same_seed_same_model(self):
        X, y, _ = toy(30)
        a = SyntaxNMT(**SMALL).fit(X, y)
        b = SyntaxNMT(**SMALL).fit(X, y)
        assert all(np.array_equal(a.params_[k].data, b.params_[k].data) for k in a.params_.tensors)

    def test_errors(self):
        X, y, _ = toy(5)
        with pytest.raises(NotFittedError):
            SyntaxNMT().predict(X)
        with pytest.raises(ValueError, match="trees"):
            SyntaxNMT(variant="hierarchical").fit(X, y)
        with pytest.raises(ValueError):
            SyntaxNMT(epochs=0).fit(X, y)
        with pytest.raises(ValueError):
            SyntaxNMT(variant="tree").fit(X, y)
