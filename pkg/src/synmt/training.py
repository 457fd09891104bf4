"""AdaDelta training loop with gradient clipping and per-epoch checkpoints."""

from __future__ import annotations

import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import ExamplePair, batches
from .model import ModelParams, batch_loss

logger = logging.getLogger(__name__)


class CheckpointWriteError(RuntimeError):
    """Saving a checkpoint failed; training stopped with the state described in the message."""


@dataclass
class AdaDeltaState:
    """Running averages E[g^2] and E[dx^2] per parameter."""

    rho: float = 0.95
    eps: float = 1e-6
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, rho: float = 0.95, eps: float = 1e-6) -> "AdaDeltaState":
        state = cls(rho, eps)
        for name, t in params.items():
            state.sq_grad[name] = np.zeros_like(t.data)
            state.sq_delta[name] = np.zeros_like(t.data)
        return state


def adadelta_step(params: ModelParams, state: AdaDeltaState, grads: dict[str, np.ndarray] | None = None) -> bool:
    """Apply one AdaDelta update in place.

    ``grads`` defaults to each tensor's ``.grad``.  A step with any
    non-finite gradient is skipped (returns ``False``).
    """
    grads = grads if grads is not None else {k: t.grad for k, t in params.items()}
    for name, g in grads.items():
        if g is None or not np.isfinite(g).all():
            logger.warning("non-finite gradient in %s; update skipped", name)
            return False
    rho, eps = state.rho, state.eps
    for name, t in params.items():
        g = grads[name]
        eg = state.sq_grad[name]
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        t.data += delta
    return True


def clip_grad_norm(params: ModelParams, max_norm: float | None) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.vdot(t.grad, t.grad)) for t in params)))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for t in params:
            t.grad *= scale
    return total


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 80
    clip_norm: float | None = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    bucket_batches: int = 20


@dataclass
class TrainReport:
    epoch: int
    updates: int
    loss_per_token: float
    seconds: float
    dev_score: float | None = None

    def line(self) -> str:
        return f"{self.epoch}\t{self.updates}\t{self.loss_per_token:.6f}\t{self.seconds:.2f}"


@dataclass
class TrainState:
    """Everything needed to continue a run bit-identically."""

    params: ModelParams
    optimizer: AdaDeltaState
    rng: np.random.Generator
    epoch: int = 0
    updates: int = 0
    best_dev: float | None = None


def train_step(params: ModelParams, batch, optimizer: AdaDeltaState, rng, clip_norm) -> tuple[float, bool]:
    params.zero_grad()
    loss = batch_loss(params, batch, train=True, rng=rng)
    ad.backward(loss)
    clip_grad_norm(params, clip_norm)
    return loss.item(), adadelta_step(params, optimizer)


def train(
    state: TrainState,
    examples: Sequence[ExamplePair],
    config: TrainConfig,
    epochs: int | None = None,
    dev_score: Callable[[ModelParams], float] | None = None,
    on_epoch: Callable[[TrainState, TrainReport, bool], None] | None = None,
    progress=sys.stdout,
) -> list[TrainReport]:
    """Run ``epochs`` more epochs from ``state`` (mutated in place).

    ``on_epoch(state, report, is_best)`` is where checkpoints get written.
    Every variant goes through this same loop; only ``encode`` differs.
    """
    if not examples:
        raise ValueError("train: no training examples")
    epochs = config.epochs if epochs is None else epochs
    reports = []
    for _ in range(epochs):
        started = time.perf_counter()
        total_loss, total_tokens = 0.0, 0
        for batch in batches(examples, config.batch_size, state.rng, config.bucket_batches):
            loss, applied = train_step(state.params, batch, state.optimizer, state.rng, config.clip_norm)
            total_loss += loss
            total_tokens += batch.n_target_tokens
            if applied:
                state.updates += 1
        state.epoch += 1
        report = TrainReport(state.epoch, state.updates, total_loss / max(total_tokens, 1), 0.0)
        is_best = False
        if dev_score is not None:
            report.dev_score = dev_score(state.params)
            if state.best_dev is None or report.dev_score > state.best_dev:
                state.best_dev = report.dev_score
                is_best = True
        report.seconds = time.perf_counter() - started
        if progress is not None:
            print(report.line(), file=progress, flush=True)
        if on_epoch is not None:
            try:
                on_epoch(state, report, is_best)
            except OSError as e:
                raise CheckpointWriteError(
                    f"checkpoint write failed after epoch {state.epoch} ({state.updates} updates, "
                    f"loss/token {report.loss_per_token:.6f}); earlier checkpoints are untouched: {e}"
                ) from e
        reports.append(report)
    return reports
