"""Attention-based GRU encoder-decoder with optional source-syntax encoders.

Four encoders share one attention/decoder stack:

``baseline``
    bi-GRU over words.
``parallel``
    a second, small bi-GRU runs over the structural label sequence; each
    word's annotation is its word annotation concatenated with the label
    annotation at its POS-tag position.
``hierarchical``
    the label bi-GRU runs first and its POS-position annotation is appended
    to the word embedding that feeds the word bi-GRU.
``mixed``
    one bi-GRU over the interleaved label/word stream; only word positions
    are handed to attention.  Labels live in the source vocabulary, so the
    parameter count equals the baseline's.

All tensors are time-major: ids ``[T, B]``, activations ``[T, B, D]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EOS_ID, VARIANTS, Batch, ExamplePair, collate

GRU_PARTS = ("W_g", "W_c", "U_g", "U_c", "b_g", "b_c")


@dataclass
class ModelConfig:
    variant: str = "baseline"
    src_vocab_size: int = 16000
    tgt_vocab_size: int = 16000
    label_vocab_size: int = 51
    word_emb_dim: int = 620
    hidden_dim: int = 1000
    label_emb_dim: int = 100
    label_hidden_dim: int = 100
    attention_dim: int | None = None
    dropout: float = 0.5
    init_scale: float = 0.01
    seed: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("src_vocab_size", "tgt_vocab_size", "word_emb_dim", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.uses_labels:
            for name in ("label_vocab_size", "label_emb_dim", "label_hidden_dim"):
                if getattr(self, name) <= 0:
                    raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")

    @property
    def uses_labels(self) -> bool:
        return self.variant in ("parallel", "hierarchical")

    @property
    def att_dim(self) -> int:
        return self.attention_dim or self.hidden_dim

    @property
    def annotation_dim(self) -> int:
        if self.variant == "parallel":
            return 2 * self.hidden_dim + 2 * self.label_hidden_dim
        return 2 * self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)


def _gru_shapes(shapes: dict, prefix: str, n_in: int, n_hid: int) -> None:
    shapes[f"{prefix}.W_g"] = (n_in, 2 * n_hid)
    shapes[f"{prefix}.W_c"] = (n_in, n_hid)
    shapes[f"{prefix}.U_g"] = (n_hid, 2 * n_hid)
    shapes[f"{prefix}.U_c"] = (n_hid, n_hid)
    shapes[f"{prefix}.b_g"] = (2 * n_hid,)
    shapes[f"{prefix}.b_c"] = (n_hid,)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every learned tensor of ``cfg``."""
    E, H = cfg.word_emb_dim, cfg.hidden_dim
    C, A = cfg.annotation_dim, cfg.att_dim
    shapes: dict[str, tuple[int, ...]] = {
        "src_emb": (cfg.src_vocab_size, E),
        "tgt_emb": (cfg.tgt_vocab_size, E),
    }
    word_in = E + 2 * cfg.label_hidden_dim if cfg.variant == "hierarchical" else E
    _gru_shapes(shapes, "enc_fw", word_in, H)
    _gru_shapes(shapes, "enc_bw", word_in, H)
    if cfg.uses_labels:
        shapes["lbl_emb"] = (cfg.label_vocab_size, cfg.label_emb_dim)
        _gru_shapes(shapes, "lbl_fw", cfg.label_emb_dim, cfg.label_hidden_dim)
        _gru_shapes(shapes, "lbl_bw", cfg.label_emb_dim, cfg.label_hidden_dim)
    shapes["init.W"] = (H, H)
    shapes["init.b"] = (H,)
    shapes["att.W"] = (H, A)
    shapes["att.U"] = (C, A)
    shapes["att.b"] = (A,)
    shapes["att.v"] = (A, 1)
    _gru_shapes(shapes, "dec", E + C, H)
    shapes["out.W"] = (H + E + C, E)
    shapes["out.b"] = (E,)
    shapes["proj.W"] = (E, cfg.tgt_vocab_size)
    shapes["proj.b"] = (cfg.tgt_vocab_size,)
    return shapes


class ModelParams:
    """Named learned tensors plus the config that shaped them."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        shapes = param_shapes(self.config)
        if set(state) != set(shapes):
            missing = sorted(set(shapes) - set(state))
            extra = sorted(set(state) - set(shapes))
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, arr in state.items():
            if tuple(arr.shape) != shapes[k]:
                raise ValueError(f"{k}: shape {tuple(arr.shape)} != expected {shapes[k]}")
            self.tensors[k].data[...] = arr

    def copy(self) -> "ModelParams":
        return ModelParams(
            replace(self.config),
            {k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self.tensors.items()},
        )


def orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(config: ModelConfig, seed: int | np.random.Generator | None = None) -> ModelParams:
    """Uniform(-init_scale, init_scale) weights, orthogonal recurrent blocks, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        config.seed if seed is None else seed
    )
    dtype = ad.get_default_dtype()
    tensors = {}
    for name, shape in param_shapes(config).items():
        part = name.rsplit(".", 1)[-1]
        if part.startswith("b"):
            data = np.zeros(shape)
        elif part == "U_g":
            n = shape[0]
            data = np.concatenate([orthogonal(n, rng), orthogonal(n, rng)], axis=1)
        elif part == "U_c":
            data = orthogonal(shape[0], rng)
        else:
            data = rng.uniform(-config.init_scale, config.init_scale, size=shape)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return ModelParams(config, tensors)


def count_params(params: ModelParams | ModelConfig) -> int:
    """Exact number of learned scalars (works from a config alone)."""
    if isinstance(params, ModelConfig):
        return int(sum(np.prod(s) for s in param_shapes(params).values()))
    return int(sum(t.size for t in params))


# ---------------------------------------------------------------------------
# recurrent building blocks


def gru_cell_reference(h: Tensor, xg: Tensor, xc: Tensor, U_g: Tensor, U_c: Tensor) -> Tensor:
    """GRU update spelled out in primitive ops (reference for the fused cell).

    z, r = sigmoid(xg + h U_g); h~ = tanh(xc + (r*h) U_c); h' = (1-z) h + z h~.
    """
    n = U_c.shape[0]
    z, r = ad.split(ad.sigmoid(xg + h @ U_g), [n, n], axis=-1)
    cand = ad.tanh(xc + (r * h) @ U_c)
    return h + z * (cand - h)


gru_cell = ad.gru_cell


def gru_step(params: ModelParams, prefix: str, x: Tensor, h: Tensor) -> Tensor:
    """Single GRU step from a raw input ``x`` ``[B, in]``."""
    p = {k: params[f"{prefix}.{k}"] for k in GRU_PARTS}
    xg = x @ p["W_g"] + p["b_g"]
    xc = x @ p["W_c"] + p["b_c"]
    return gru_cell(h, xg, xc, p["U_g"], p["U_c"])


def _project(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    T, B, D = x.shape
    y = ad.reshape(x, (T * B, D)) @ W + b
    return ad.reshape(y, (T, B, W.shape[1]))


def gru_scan(params: ModelParams, prefix: str, x: Tensor, mask: np.ndarray, reverse: bool = False) -> Tensor:
    """Run a GRU over ``x`` ``[T, B, in]``; padded steps keep the previous state.

    Padding sits at the end of each column, so the reverse pass stays at its
    zero initial state until it reaches real tokens.
    """
    p = {k: params[f"{prefix}.{k}"] for k in GRU_PARTS}
    T, B, _ = x.shape
    n = p["U_c"].shape[0]
    xg = _project(x, p["W_g"], p["b_g"])
    xc = _project(x, p["W_c"], p["b_c"])
    h = Tensor(np.zeros((B, n), dtype=x.data.dtype))
    keep = np.asarray(mask) > 0
    full = keep.all(axis=1)
    states: list[Tensor | None] = [None] * T
    for t in (range(T - 1, -1, -1) if reverse else range(T)):
        h = gru_cell(h, xg[t], xc[t], p["U_g"], p["U_c"], keep=None if full[t] else keep[t][:, None])
        states[t] = h
    return ad.stack(states, axis=0)


def bigru(params: ModelParams, prefix: str, x: Tensor, mask: np.ndarray) -> Tensor:
    """``[forward; backward]`` annotations, ``[T, B, 2H]``."""
    fw = gru_scan(params, f"{prefix}_fw", x, mask)
    bw = gru_scan(params, f"{prefix}_bw", x, mask, reverse=True)
    return ad.concat([fw, bw], axis=-1)


# ---------------------------------------------------------------------------
# encoder


@dataclass
class EncoderOutput:
    """Word-position annotations ``[S, B, C]`` with their 0/1 mask ``[S, B]``.

    ``keys``/``values`` are the batch-major attention operands, filled by
    :func:`prepare_attention`.
    """

    annotations: Tensor
    mask: np.ndarray
    keys: Tensor | None = None
    values: Tensor | None = None
    extras: dict = field(default_factory=dict)

    def select(self, columns) -> "EncoderOutput":
        """Copy of the (prepared) output with batch columns ``columns``; no grad."""
        columns = np.asarray(columns)
        return EncoderOutput(
            Tensor(self.annotations.data[:, columns]),
            self.mask[:, columns],
            Tensor(self.keys.data[columns]) if self.keys is not None else None,
            Tensor(self.values.data[columns]) if self.values is not None else None,
        )


def encode(params: ModelParams, batch: Batch) -> EncoderOutput:
    cfg = params.config
    variant = cfg.variant
    if variant in ("parallel", "hierarchical") and (batch.labels is None or batch.label_index is None):
        raise ValueError(f"{variant} encoder needs label sequences in the batch")
    if variant == "mixed" and (batch.mixed is None or batch.word_positions is None):
        raise ValueError("mixed encoder needs mixed sequences in the batch")

    label_ann = None
    if cfg.uses_labels:
        lbl = ad.embedding(params["lbl_emb"], batch.labels)
        label_states = bigru(params, "lbl", lbl, batch.label_mask)
        label_ann = ad.gather_steps(label_states, batch.label_index)

    if variant == "mixed":
        x = ad.embedding(params["src_emb"], batch.mixed)
        states = bigru(params, "enc", x, batch.mixed_mask)
        ann = ad.gather_steps(states, batch.word_positions)
    elif variant == "hierarchical":
        x = ad.concat([ad.embedding(params["src_emb"], batch.src), label_ann], axis=-1)
        ann = bigru(params, "enc", x, batch.src_mask)
    else:
        x = ad.embedding(params["src_emb"], batch.src)
        ann = bigru(params, "enc", x, batch.src_mask)
        if variant == "parallel":
            ann = ad.concat([ann, label_ann], axis=-1)
    return EncoderOutput(ann, np.asarray(batch.src_mask))


def prepare_attention(params: ModelParams, enc: EncoderOutput) -> EncoderOutput:
    """Precompute ``U h_j + b`` once per sentence batch."""
    if enc.keys is None:
        S, B, C = enc.annotations.shape
        values = ad.transpose(enc.annotations, (1, 0, 2))
        keys = ad.reshape(ad.reshape(values, (B * S, C)) @ params["att.U"], (B, S, -1)) + params["att.b"]
        enc.keys, enc.values = keys, values
    return enc


# ---------------------------------------------------------------------------
# attention and decoder


def _attend(params: ModelParams, s_prev: Tensor, keys: Tensor, values: Tensor, mask_bs) -> tuple[Tensor, Tensor]:
    B, S, A = keys.shape
    q = ad.reshape(s_prev @ params["att.W"], (B, 1, A))
    scores = ad.reshape(ad.tanh(keys + q) @ params["att.v"], (B, S))
    alpha = ad.softmax(scores, mask=np.asarray(mask_bs) > 0)
    c = ad.reshape(ad.reshape(alpha, (B, 1, S)) @ values, (B, values.shape[2]))
    return alpha, c


def attention(params: ModelParams, s_prev: Tensor, annotations: Tensor, mask) -> tuple[Tensor, Tensor]:
    """Masked additive attention.

    ``e_j = v . tanh(W s_prev + U h_j + b)``; ``alpha = softmax(e)`` over the
    unmasked positions; ``c = sum_j alpha_j h_j``.  ``annotations`` is
    ``[S, B, C]`` and ``mask`` ``[S, B]``.
    """
    enc = prepare_attention(params, EncoderOutput(annotations, np.asarray(mask)))
    return _attend(params, s_prev, enc.keys, enc.values, enc.mask.T)


@dataclass
class DecoderState:
    s: Tensor
    y_prev: np.ndarray
    c: Tensor | None = None
    alpha: np.ndarray | None = None

    def advance(self, y) -> "DecoderState":
        return DecoderState(self.s, np.asarray(y, dtype=np.int64), self.c, self.alpha)

    def select(self, rows) -> "DecoderState":
        rows = np.asarray(rows)
        return DecoderState(
            Tensor(self.s.data[rows]),
            self.y_prev[rows],
            None if self.c is None else Tensor(self.c.data[rows]),
            None if self.alpha is None else self.alpha[rows],
        )


def init_decoder(params: ModelParams, enc: EncoderOutput) -> DecoderState:
    """``s_0 = tanh(W h_back_1 + b)`` from the first word's backward state."""
    H = params.config.hidden_dim
    if enc.annotations.shape[0] == 0:
        raise ValueError("init_decoder: no source annotations")
    first_back = enc.annotations[0, :, H : 2 * H]
    s0 = ad.tanh(first_back @ params["init.W"] + params["init.b"])
    B = enc.annotations.shape[1]
    return DecoderState(s0, np.full(B, EOS_ID, dtype=np.int64))


def decoder_step(
    params: ModelParams,
    state: DecoderState,
    enc: EncoderOutput,
    train: bool = False,
    rng: np.random.Generator | None = None,
    return_logits: bool = False,
) -> tuple[DecoderState, Tensor]:
    """Attend with ``s_{i-1}``, update the GRU, predict from (s_i, y_{i-1}, c_i).

    Returns the new state (``y_prev`` unchanged; call ``advance``) and the
    output distribution, or the raw logits when ``return_logits``.
    """
    y_prev = np.asarray(state.y_prev)
    V = params.config.tgt_vocab_size
    if y_prev.size and (y_prev.min() < 0 or y_prev.max() >= V):
        raise IndexError(f"decoder_step: previous word id outside [0, {V})")
    prepare_attention(params, enc)
    emb = ad.embedding(params["tgt_emb"], y_prev)
    alpha, c = _attend(params, state.s, enc.keys, enc.values, enc.mask.T)
    s = gru_step(params, "dec", ad.concat([emb, c], axis=-1), state.s)
    hidden = ad.tanh(ad.concat([s, emb, c], axis=-1) @ params["out.W"] + params["out.b"])
    hidden = ad.dropout(hidden, params.config.dropout, rng, train=train)
    logits = hidden @ params["proj.W"] + params["proj.b"]
    new_state = DecoderState(s, y_prev, c, alpha.data)
    return new_state, (logits if return_logits else ad.softmax(logits))


def teacher_forced(
    params: ModelParams,
    batch: Batch,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, np.ndarray]:
    """Run the decoder over the reference targets.

    Returns logits ``[T, B, V]`` and attention weights ``[T, B, S]``.
    """
    enc = prepare_attention(params, encode(params, batch))
    state = init_decoder(params, enc)
    logits, alphas = [], []
    for i in range(batch.tgt.shape[0]):
        state, step_logits = decoder_step(params, state, enc, train=train, rng=rng, return_logits=True)
        logits.append(step_logits)
        alphas.append(state.alpha)
        state = state.advance(batch.tgt[i])
    return ad.stack(logits, axis=0), np.stack(alphas)


def batch_loss(
    params: ModelParams,
    batch: Batch,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Summed target NLL over a batch; padded target steps add exactly zero."""
    logits, _ = teacher_forced(params, batch, train=train, rng=rng)
    return ad.cross_entropy(logits, batch.tgt, batch.tgt_mask)


def sentence_loss(params: ModelParams, example: ExamplePair, train: bool = False, rng=None) -> Tensor:
    """Negative log-likelihood of one pair's target (``</s>`` included)."""
    if len(example.tgt) == 0:
        raise ValueError("sentence_loss: empty target")
    return batch_loss(params, collate([example]), train=train, rng=rng)
