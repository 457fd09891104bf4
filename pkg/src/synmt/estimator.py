"""scikit-learn style wrapper around training and decoding."""

from __future__ import annotations

import sys

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import pipeline as pl
from .config import RunConfig, from_dict
from .evaluation import bleu
from .inference import translate
from .validation import check_parallel, check_positive_int, check_sentences, check_trees


class SyntaxNMT(BaseEstimator):
    """Attentional encoder-decoder; ``variant`` picks the source encoder.

    ``fit(X, y, trees=None)`` takes source sentences, target sentences and
    (for every variant but ``baseline``) bracketed parse trees of the
    sources.  ``predict`` returns target strings.
    """

    def __init__(
        self,
        variant: str = "baseline",
        word_emb_dim: int = 32,
        hidden_dim: int = 64,
        label_emb_dim: int = 16,
        label_hidden_dim: int = 16,
        dropout: float = 0.1,
        init_scale: float = 0.2,
        src_vocab_size: int = 200,
        tgt_vocab_size: int = 200,
        epochs: int = 15,
        batch_size: int = 16,
        clip_norm: float | None = 5.0,
        beam: int = 10,
        seed: int = 1,
        verbose: bool = False,
    ):
        self.variant = variant
        self.word_emb_dim = word_emb_dim
        self.hidden_dim = hidden_dim
        self.label_emb_dim = label_emb_dim
        self.label_hidden_dim = label_hidden_dim
        self.dropout = dropout
        self.init_scale = init_scale
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.beam = beam
        self.seed = seed
        self.verbose = verbose

    def _run_config(self) -> RunConfig:
        params = self.get_params()
        params.pop("verbose")
        return from_dict(params)

    def _corpus(self, X, trees, y=None) -> pl.Corpus:
        if y is None:
            X = check_sentences(X)
        else:
            X, y = check_parallel(X, y)
        if trees is None:
            if self.variant != "baseline":
                raise ValueError(f"variant {self.variant!r} needs parse trees")
            parsed = None
        else:
            parsed = check_trees(trees, X)
        return pl.Corpus(X, parsed, y)

    def fit(self, X, y, trees=None):
        cfg = self._run_config()
        check_positive_int(self.epochs, "epochs")
        corpus = self._corpus(X, trees, y)
        state, vocabs, reports = pl.fit(cfg, corpus, progress=sys.stdout if self.verbose else None)
        self.params_ = state.params
        self.vocabs_ = vocabs
        self.loss_curve_ = np.array([r.loss_per_token for r in reports])
        self.n_updates_ = state.updates
        return self

    def _decode(self, X, trees):
        check_is_fitted(self, "params_")
        corpus = self._corpus(X, trees)
        examples = pl.decoding_examples(self.params_.config.variant, corpus, self.vocabs_)
        return translate(self.params_, examples, self.vocabs_.tgt.itos, beam=self.beam)

    def predict(self, X, trees=None) -> list[str]:
        return [" ".join(t.words) for t in self._decode(X, trees)]

    def align(self, X, trees=None) -> list[set[tuple[int, int]]]:
        """Attention-argmax links between each source and its translation."""
        return [t.alignment for t in self._decode(X, trees)]

    def score(self, X, y, trees=None) -> float:
        """Corpus BLEU in [0, 1]."""
        _, y = check_parallel(X, y)
        return bleu(self.predict(X, trees), [[r] for r in y])
