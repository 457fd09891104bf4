"""Beam search, forced decoding and attention-based word alignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import EOS_ID, ExamplePair, collate
from .model import ModelParams, decoder_step, encode, init_decoder, prepare_attention, teacher_forced


@dataclass
class Hypothesis:
    tokens: list[int]
    score: float
    attention: list[np.ndarray] = field(default_factory=list)
    finished: bool = False

    @property
    def normalized_score(self) -> float:
        return self.score / max(len(self.tokens), 1)

    def words(self) -> list[int]:
        return self.tokens[:-1] if self.finished else list(self.tokens)


StepFn = Callable[[object, np.ndarray], tuple[object, np.ndarray, np.ndarray]]


def search(step: StepFn, state, beam: int, max_len: int, eos: int = EOS_ID) -> list[Hypothesis]:
    """Model-agnostic beam search.

    ``step(state, y_prev)`` maps a state batch (one row per live hypothesis)
    and the previous tokens to ``(next_state, logprobs [K, V], alphas [K, S])``;
    ``next_state.select(rows)`` must pick rows.  Finished hypotheses leave the
    beam and shrink it.  Returned candidates (finished, plus live ones cut at
    ``max_len``) are sorted by length-normalized score, best first; ties keep
    the lower token id.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    live = [Hypothesis([], 0.0)]
    y_prev = np.array([eos], dtype=np.int64)
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        state, logp, alphas = step(state, y_prev)
        scores = np.array([h.score for h in live])[:, None] + logp
        width = beam - len(finished)
        flat = scores.reshape(-1)
        top = np.argsort(-flat, kind="stable")[:width]
        vocab = logp.shape[1]
        survivors, rows = [], []
        for idx in top:
            row, word = divmod(int(idx), vocab)
            parent = live[row]
            hyp = Hypothesis(parent.tokens + [word], float(flat[idx]), parent.attention + [alphas[row]])
            if word == eos:
                hyp.finished = True
                finished.append(hyp)
            else:
                survivors.append(hyp)
                rows.append(row)
        live = survivors
        if not live or len(finished) >= beam:
            break
        state = state.select(rows)
        y_prev = np.array([h.tokens[-1] for h in live], dtype=np.int64)
    candidates = finished + live
    candidates.sort(key=lambda h: -h.normalized_score)
    return candidates


class _ModelStep:
    """Adapter exposing one model's decoder to :func:`search`."""

    def __init__(self, params: ModelParams, enc, dec_state):
        self.params = params
        self.enc = enc
        self.dec = dec_state

    def select(self, rows) -> "_ModelStep":
        rows = np.asarray(rows)
        return _ModelStep(self.params, self.enc.select(rows), self.dec.select(rows))

    @staticmethod
    def step(state: "_ModelStep", y_prev: np.ndarray):
        dec, logits = decoder_step(state.params, state.dec.advance(y_prev), state.enc, return_logits=True)
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return _ModelStep(state.params, state.enc, dec), logp, dec.alpha


def default_max_len(n_words: int) -> int:
    return 2 * n_words + 10


def beam_search(
    params: ModelParams, example: ExamplePair, beam: int = 10, max_len: int | None = None
) -> Hypothesis:
    """Best hypothesis by length-normalized log-probability."""
    max_len = default_max_len(example.n_words) if max_len is None else max_len
    with ad.no_grad():
        enc = prepare_attention(params, encode(params, collate([example])))
        start = _ModelStep(params, enc, init_decoder(params, enc))
        return search(_ModelStep.step, start, beam, max_len)[0]


def greedy_decode(params: ModelParams, example: ExamplePair, max_len: int | None = None) -> Hypothesis:
    """Argmax decoding, written independently of :func:`search`."""
    max_len = default_max_len(example.n_words) if max_len is None else max_len
    with ad.no_grad():
        enc = prepare_attention(params, encode(params, collate([example])))
        dec = init_decoder(params, enc)
        hyp = Hypothesis([], 0.0)
        y = EOS_ID
        for _ in range(max_len):
            dec, logits = decoder_step(params, dec.advance([y]), enc, return_logits=True)
            z = logits.data[0] - logits.data[0].max()
            logp = z - np.log(np.exp(z).sum())
            y = int(np.argmax(logp))
            hyp.tokens.append(y)
            hyp.score += float(logp[y])
            hyp.attention.append(dec.alpha[0])
            if y == EOS_ID:
                hyp.finished = True
                break
        return hyp


@dataclass
class ForcedResult:
    log_prob: float
    attention: np.ndarray  # [target steps incl. </s>, source words incl. </s>]


def force_decode_batch(params: ModelParams, examples: Sequence[ExamplePair]) -> list[ForcedResult]:
    """Clamp the decoder to each example's target and record attention."""
    if any(not ex.tgt for ex in examples):
        raise ValueError("force_decode: empty reference")
    batch = collate(examples)
    with ad.no_grad():
        logits, alphas = teacher_forced(params, batch)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, batch.tgt[..., None], axis=-1)[..., 0]
    out = []
    for b, ex in enumerate(examples):
        n_t, n_s = len(ex.tgt), len(ex.src)
        lp = float(np.where(batch.tgt_mask[:n_t, b] > 0, picked[:n_t, b], 0.0).sum())
        out.append(ForcedResult(lp, alphas[:n_t, b, :n_s].copy()))
    return out


def force_decode(params: ModelParams, example: ExamplePair, reference: Sequence[int] | None = None) -> ForcedResult:
    """Forced decoding of one sentence; ``reference`` (ids, ``</s>`` appended
    if missing) overrides ``example.tgt``."""
    if reference is not None:
        ref = list(reference)
        if not ref:
            raise ValueError("force_decode: empty reference")
        if ref[-1] != EOS_ID:
            ref.append(EOS_ID)
        example = ExamplePair(**{**example.__dict__, "tgt": ref})
    if not example.tgt:
        raise ValueError("force_decode: empty reference")
    return force_decode_batch(params, [example])[0]


def force_decode_corpus(params: ModelParams, examples: Sequence[ExamplePair], batch_size: int = 32):
    results: list[ForcedResult] = []
    for lo in range(0, len(examples), batch_size):
        results.extend(force_decode_batch(params, examples[lo : lo + batch_size]))
    return results


def extract_alignment(attention, n_source_words: int, n_target_words: int | None = None) -> set[tuple[int, int]]:
    """``(source word, target word)`` links from per-step attention argmax.

    Only the first ``n_source_words`` columns (real words, never ``</s>`` or
    structural labels) compete; ties go to the lowest index.  Rows past
    ``n_target_words`` (the ``</s>`` step) are dropped.
    """
    att = np.asarray(attention)
    if n_target_words is None:
        n_target_words = att.shape[0]
    if n_source_words <= 0:
        return set()
    rows = att[:n_target_words, :n_source_words]
    return {(int(np.argmax(row)), i) for i, row in enumerate(rows)}


@dataclass
class Translation:
    tokens: list[int]
    words: list[str]
    alignment: set[tuple[int, int]]
    score: float


def translate(params: ModelParams, examples: Sequence[ExamplePair], tgt_itos: Sequence[str], beam: int = 10):
    """Beam-translate ``examples`` and align each output to its source."""
    out = []
    for ex in examples:
        hyp = beam_search(params, ex, beam=beam) if beam > 1 else greedy_decode(params, ex)
        ids = hyp.words()
        att = np.stack(hyp.attention) if hyp.attention else np.zeros((0, len(ex.src)))
        out.append(
            Translation(ids, [tgt_itos[i] for i in ids], extract_alignment(att, ex.n_words, len(ids)), hyp.score)
        )
    return out


def format_pharaoh(links) -> str:
    return " ".join(f"{s}-{t}" for s, t in sorted(links))

