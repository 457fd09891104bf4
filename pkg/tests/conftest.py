import numpy as np
import pytest

from synmt.corpus import build_vocabularies, make_example
from synmt.model import ModelConfig, init_params
from synmt.treebank import parse_bracketed

I_LOVE_DOGS = "(S (NP (PRP I)) (VP (VBP love) (NP (NNS dogs))))"


class Tiny:
    """A three-word pair numericalized for every variant, plus tiny configs."""

    src = ["I love dogs"]
    tgt = ["j aime les chiens"]

    def __init__(self):
        self.tree = parse_bracketed(I_LOVE_DOGS)
        self.vocabs = {}
        for v in ("baseline", "parallel", "hierarchical", "mixed"):
            self.vocabs[v] = build_vocabularies(self.src, [self.tree], self.tgt, v, 50, 50)

    def example(self, variant, tgt=True):
        sv, tv, lv = self.vocabs[variant]
        return make_example(
            self.src[0].split(), self.tgt[0].split() if tgt else None, self.tree, sv, tv, variant, lv, index=0
        )

    def config(self, variant, dim=4, **kw):
        sv, tv, lv = self.vocabs[variant]
        base = dict(
            variant=variant,
            src_vocab_size=len(sv),
            tgt_vocab_size=len(tv),
            label_vocab_size=len(lv) if lv is not None else 1,
            word_emb_dim=dim,
            hidden_dim=dim + 1,
            label_emb_dim=3,
            label_hidden_dim=2,
            attention_dim=dim - 1,
            dropout=0.0,
        )
        base.update(kw)
        return ModelConfig(**base)

    def params(self, variant, seed=0, scale=0.5, **kw):
        """Params with every tensor drawn from N(0, scale^2) so gradients are not tiny."""
        p = init_params(self.config(variant, **kw), seed)
        rng = np.random.default_rng(seed + 100)
        for t in p:
            t.data[...] = rng.normal(scale=scale, size=t.shape)
        return p


@pytest.fixture(scope="session")
def tiny():
    return Tiny()


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` logs one PASS/FAIL line and asserts ``ok``."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config.stash.setdefault(_CRITERIA, []).append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
