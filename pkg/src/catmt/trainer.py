"""Training loop: Adam with inverse-square-root warmup, seeded batching, best-checkpoint selection."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .model import ModelConfig, Transformer, pad_batch, teacher_forcing
from .rng import SplitMix64, derive_seed
from .tokenizer import MAX_LEN, Vocab, encode_ids

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 4
    max_source_length: int = MAX_LEN
    warmup_steps: int = 400
    lr_scale: float = 1.0
    seed: int = 42
    checkpoint_path: str | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.warmup_steps < 1 or self.lr_scale <= 0:
            raise ValueError("warmup_steps and lr_scale must be positive")


def lr_at(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    if step < 1:
        raise ValueError("step must be >= 1")
    return scale * d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({n: np.zeros_like(a) for n, a in params.items()}, {n: np.zeros_like(a) for n, a in params.items()})


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= update.astype(p.dtype)


@dataclass
class Example:
    src: list[int]
    tgt: list[int]


def make_examples(sources: list[str], targets: list[str], src_vocab: Vocab, tgt_vocab: Vocab, max_len: int = MAX_LEN) -> list[Example]:
    return [
        Example(encode_ids(s, src_vocab, True, max_len), encode_ids(t, tgt_vocab, True, max_len))
        for s, t in zip(sources, targets)
    ]


def batch_arrays(batch: list[Example]):
    src = pad_batch([e.src for e in batch])
    pairs = [teacher_forcing(e.tgt) for e in batch]
    return src, pad_batch([p[0] for p in pairs]), pad_batch([p[1] for p in pairs])


def evaluate_loss(model: Transformer, examples: list[Example], batch_size: int = 32) -> float:
    """Mean per-token loss with dropout off; never touches the parameters."""
    total, tokens = 0.0, 0
    for start in range(0, len(examples), batch_size):
        src, tin, tout = batch_arrays(examples[start : start + batch_size])
        result = model.loss_value(src, tin, tout)
        total += float(result.total.data)
        tokens += result.tokens
    return total / max(tokens, 1)


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best by validation loss
    train_losses: list[float] = field(default_factory=list)  # mean per epoch
    val_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0


def train(
    train_examples: list[Example],
    val_examples: list[Example],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    model: Transformer | None = None,
) -> TrainResult:
    if not train_examples:
        raise ValueError("training split is empty")
    started = time.perf_counter()
    model = model or Transformer(model_cfg, seed=cfg.seed)
    state = AdamState.zeros_like(model.params)
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    result = TrainResult(checkpoint=None)  # type: ignore[arg-type]
    best_val = math.inf
    last_good = _snapshot(model, state)

    for epoch in range(cfg.epochs):
        order = list(range(len(train_examples)))
        SplitMix64(derive_seed(cfg.seed, 2, epoch)).shuffle(order)
        epoch_total, epoch_tokens = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_examples[i] for i in order[start : start + cfg.batch_size]]
            src, tin, tout = batch_arrays(batch)
            loss, grads = model.loss_and_grads(src, tin, tout, dropout_rng if model_cfg.dropout_rate > 0 else None)
            mean = float(loss.total.data) / loss.tokens
            if not math.isfinite(mean):
                model.params, state = last_good
                raise TrainingDiverged(f"loss became {mean} at step {state.step + 1}")
            # loss averaged over the batch's non-pad tokens
            grads = {n: g / loss.tokens for n, g in grads.items()}
            optimizer_step(model.params, grads, state, lr_at(state.step + 1, model_cfg.d_model, cfg.warmup_steps, cfg.lr_scale))
            result.step_losses.append(mean)
            epoch_total += float(loss.total.data)
            epoch_tokens += loss.tokens
        last_good = _snapshot(model, state)
        train_loss = epoch_total / epoch_tokens
        val_loss = evaluate_loss(model, val_examples) if val_examples else train_loss
        result.train_losses.append(train_loss)
        result.val_losses.append(val_loss)
        log.info("epoch %d/%d train %.4f val %.4f", epoch + 1, cfg.epochs, train_loss, val_loss)
        if val_loss < best_val or result.checkpoint is None:
            best_val = val_loss
            params, opt = _snapshot(model, state)
            result.checkpoint = Checkpoint(
                config=model_cfg,
                params=params,
                optimizer=opt,
                src_vocab=src_vocab,
                tgt_vocab=tgt_vocab,
                meta={"epoch": epoch + 1, "step": state.step, "val_loss": val_loss},
            )
            if cfg.checkpoint_path:
                save_checkpoint(result.checkpoint, cfg.checkpoint_path)
    result.checkpoint.meta["train_losses"] = result.train_losses
    result.checkpoint.meta["val_losses"] = result.val_losses
    if cfg.checkpoint_path:
        save_checkpoint(result.checkpoint, cfg.checkpoint_path)
    result.seconds = time.perf_counter() - started
    return result


def _snapshot(model: Transformer, state: AdamState):
    params = {n: a.copy() for n, a in model.params.items()}
    opt = AdamState({n: a.copy() for n, a in state.m.items()}, {n: a.copy() for n, a in state.v.items()}, state.step, state.beta1, state.beta2, state.eps)
    return params, opt
