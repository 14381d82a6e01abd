"""Encoder-decoder Transformer with pre-norm residual blocks.

Parameters live in a flat ``{name: ndarray}`` dict. Per-head projection
matrices are stored side by side: columns ``i*d_k:(i+1)*d_k`` of ``wq`` are
head ``i``'s query projection, likewise ``wk`` and ``wv`` (with ``d_v``).
``wo`` maps the ``h*d_v`` concatenation back to ``d_model``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .tokenizer import BOS, MAX_LEN, PAD


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_src: int
    vocab_tgt: int
    d_model: int = 128
    h: int = 4
    d_k: int = 32
    d_v: int = 32
    d_ff: int = 512
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    max_len: int = MAX_LEN
    dropout_rate: float = 0.1

    def __post_init__(self) -> None:
        if min(self.vocab_src, self.vocab_tgt, self.d_model, self.h, self.d_k, self.d_v, self.d_ff) <= 0:
            raise ModelError("sizes must be positive")
        if self.n_enc_layers < 1 or self.n_dec_layers < 1:
            raise ModelError("layer counts must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ModelError("dropout_rate must be in [0, 1)")

    @classmethod
    def tiny(cls, vocab_src: int, vocab_tgt: int, **kw) -> "ModelConfig":
        base = dict(d_model=8, h=2, d_k=4, d_v=4, d_ff=16, n_enc_layers=1, n_dec_layers=1, dropout_rate=0.0)
        return cls(vocab_src, vocab_tgt, **{**base, **kw})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "src_embed": (cfg.vocab_src, cfg.d_model),
        "tgt_embed": (cfg.vocab_tgt, cfg.d_model),
    }

    def attention(prefix: str) -> None:
        shapes[f"{prefix}.wq"] = (cfg.d_model, cfg.h * cfg.d_k)
        shapes[f"{prefix}.wk"] = (cfg.d_model, cfg.h * cfg.d_k)
        shapes[f"{prefix}.wv"] = (cfg.d_model, cfg.h * cfg.d_v)
        shapes[f"{prefix}.wo"] = (cfg.h * cfg.d_v, cfg.d_model)

    def norm(prefix: str) -> None:
        shapes[f"{prefix}.gain"] = (cfg.d_model,)
        shapes[f"{prefix}.bias"] = (cfg.d_model,)

    def ffn(prefix: str) -> None:
        shapes[f"{prefix}.w1"] = (cfg.d_model, cfg.d_ff)
        shapes[f"{prefix}.b1"] = (cfg.d_ff,)
        shapes[f"{prefix}.w2"] = (cfg.d_ff, cfg.d_model)
        shapes[f"{prefix}.b2"] = (cfg.d_model,)

    for i in range(cfg.n_enc_layers):
        norm(f"enc{i}.ln1")
        attention(f"enc{i}.self")
        norm(f"enc{i}.ln2")
        ffn(f"enc{i}.ffn")
    norm("enc.ln_final")
    for i in range(cfg.n_dec_layers):
        norm(f"dec{i}.ln1")
        attention(f"dec{i}.self")
        norm(f"dec{i}.ln2")
        attention(f"dec{i}.cross")
        norm(f"dec{i}.ln3")
        ffn(f"dec{i}.ffn")
    norm("dec.ln_final")
    shapes["out.w"] = (cfg.d_model, cfg.vocab_tgt)
    shapes["out.b"] = (cfg.vocab_tgt,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """Matrices ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); norm gains 1; biases 0."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".gain"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            fan_in = shape[1] if name.endswith("_embed") else shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = value.astype(dtype)
    return params


def check_params(params: Mapping[str, np.ndarray], cfg: ModelConfig) -> None:
    expected = parameter_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ModelError(f"parameter set mismatch (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ModelError(f"{name}: shape {params[name].shape} != {shape}")
        if not np.isfinite(params[name]).all():
            raise ModelError(f"{name}: non-finite values")


def positional_encoding(length: int, d_model: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)


# -- attention ---------------------------------------------------------------


def attention_t(q: Tensor, k: Tensor, v: Tensor, keep: np.ndarray) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes; ``keep`` marks usable keys."""
    d_k = q.shape[-1]
    scores = ag.scale(ag.matmul(q, ag.transpose(k, _swap_last(k.data.ndim))), 1.0 / math.sqrt(d_k))
    weights = ag.masked_softmax(scores, keep)
    return ag.matmul(weights, v), weights


def _swap_last(ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - 2)) + (ndim - 1, ndim - 2)


def multi_head_t(xq: Tensor, xk: Tensor, xv: Tensor, keep: np.ndarray, p: Mapping[str, Tensor], prefix: str, h: int) -> Tensor:
    """Inputs are (B, T, d_model); ``keep`` broadcasts against (B, h, T_q, T_k)."""
    B, Tq, _ = xq.shape
    Tk = xk.shape[1]

    def heads(x: Tensor, w: Tensor, T: int) -> Tensor:
        proj = ag.matmul(x, w)
        return ag.transpose(ag.reshape(proj, (B, T, h, w.shape[1] // h)), (0, 2, 1, 3))

    q = heads(xq, p[f"{prefix}.wq"], Tq)
    k = heads(xk, p[f"{prefix}.wk"], Tk)
    v = heads(xv, p[f"{prefix}.wv"], Tk)
    out, _ = attention_t(q, k, v, keep)
    d_v = out.shape[-1]
    concat = ag.reshape(ag.transpose(out, (0, 2, 1, 3)), (B, Tq, h * d_v))
    return ag.matmul(concat, p[f"{prefix}.wo"])


def scaled_dot_attention(Q, K, V, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array attention. ``mask[i, j]`` true means query ``i`` may attend to key ``j``."""
    Q, K, V = (np.asarray(a) for a in (Q, K, V))
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ModelError(f"shape mismatch: Q{Q.shape} K{K.shape} V{V.shape}")
    if mask is None:
        mask = np.ones(Q.shape[:-1] + K.shape[-2:-1], dtype=bool)
    with ag.no_grad():
        out, w = attention_t(Tensor(Q), Tensor(K), Tensor(V), np.asarray(mask, dtype=bool))
    return out.data, w.data


def multi_head(Q, K, V, mask, params: Mapping[str, np.ndarray], h: int) -> np.ndarray:
    """Plain-array multi-head attention on (n, d_model) inputs.

    ``params`` holds ``wq``, ``wk``, ``wv``, ``wo`` with the per-head blocks laid out
    side by side as described in the module docstring.
    """
    Q, K, V = (np.asarray(a)[None] for a in (Q, K, V))
    if K.shape[1] != V.shape[1]:
        raise ModelError("keys and values must cover the same positions")
    keep = np.ones((Q.shape[1], K.shape[1]), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    p = {f"mh.{n}": Tensor(np.asarray(params[n])) for n in ("wq", "wk", "wv", "wo")}
    with ag.no_grad():
        return multi_head_t(Tensor(Q), Tensor(K), Tensor(V), keep, p, "mh", h).data[0]


# -- encoder / decoder ---------------------------------------------------------


class Memory(NamedTuple):
    z: Tensor  # (B, N, d_model)
    keep: np.ndarray  # (B, N), false at padding


def _embed(table: Tensor, ids: np.ndarray, cfg: ModelConfig, rng) -> Tensor:
    x = ag.scale(ag.embedding(table, ids), math.sqrt(cfg.d_model))
    x = ag.add(x, positional_encoding(ids.shape[1], cfg.d_model, x.dtype))
    return ag.dropout(x, cfg.dropout_rate, rng)


def _ffn(x: Tensor, p, prefix: str) -> Tensor:
    hidden = ag.relu(ag.add(ag.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return ag.add(ag.matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _norm(x: Tensor, p, prefix: str) -> Tensor:
    return ag.layer_norm(x, p[f"{prefix}.gain"], p[f"{prefix}.bias"])


def _as_batch(ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return ids[None] if ids.ndim == 1 else ids


def encode_t(src, p: Mapping[str, Tensor], cfg: ModelConfig, rng=None, keep: np.ndarray | None = None) -> Memory:
    """``keep`` defaults to ``src != <pad>``; pass it to fix the padding layout explicitly."""
    src = _as_batch(src)
    if src.shape[1] == 0:
        raise ModelError("empty source sequence")
    if src.shape[1] > cfg.max_len + 2:
        raise ModelError(f"source length {src.shape[1]} exceeds max_len + 2")
    keep = src != PAD if keep is None else _as_batch(keep).astype(bool)
    attn_keep = keep[:, None, None, :]
    x = _embed(p["src_embed"], src, cfg, rng)
    for i in range(cfg.n_enc_layers):
        y = _norm(x, p, f"enc{i}.ln1")
        x = ag.add(x, ag.dropout(multi_head_t(y, y, y, attn_keep, p, f"enc{i}.self", cfg.h), cfg.dropout_rate, rng))
        y = _norm(x, p, f"enc{i}.ln2")
        x = ag.add(x, ag.dropout(_ffn(y, p, f"enc{i}.ffn"), cfg.dropout_rate, rng))
    return Memory(_norm(x, p, "enc.ln_final"), keep)


def decode_t(prefix, memory: Memory, p: Mapping[str, Tensor], cfg: ModelConfig, rng=None) -> Tensor:
    prefix = _as_batch(prefix)
    T = prefix.shape[1]
    if T == 0:
        raise ModelError("empty target prefix")
    causal = np.tril(np.ones((T, T), dtype=bool))
    self_keep = causal[None, None] & (prefix != PAD)[:, None, None, :]
    cross_keep = memory.keep[:, None, None, :]
    x = _embed(p["tgt_embed"], prefix, cfg, rng)
    for i in range(cfg.n_dec_layers):
        y = _norm(x, p, f"dec{i}.ln1")
        x = ag.add(x, ag.dropout(multi_head_t(y, y, y, self_keep, p, f"dec{i}.self", cfg.h), cfg.dropout_rate, rng))
        y = _norm(x, p, f"dec{i}.ln2")
        x = ag.add(x, ag.dropout(multi_head_t(y, memory.z, memory.z, cross_keep, p, f"dec{i}.cross", cfg.h), cfg.dropout_rate, rng))
        y = _norm(x, p, f"dec{i}.ln3")
        x = ag.add(x, ag.dropout(_ffn(y, p, f"dec{i}.ffn"), cfg.dropout_rate, rng))
    x = _norm(x, p, "dec.ln_final")
    return ag.add(ag.matmul(x, p["out.w"]), p["out.b"])


class LossResult(NamedTuple):
    total: Tensor  # summed NLL, differentiable
    tokens: int

    @property
    def mean(self) -> float:
        return float(self.total.data) / max(self.tokens, 1)


def loss(logits: Tensor, gold) -> LossResult:
    """Teacher-forced NLL: row ``i`` of ``logits`` scores gold symbol ``i``; padding is ignored."""
    gold = _as_batch(gold)
    if logits.shape[:-1] != gold.shape:
        raise ModelError(f"logits {logits.shape[:-1]} do not match gold {gold.shape}")
    return LossResult(ag.cross_entropy_sum(logits, gold, ignore_index=PAD), int((gold != PAD).sum()))


def backward(result: LossResult | Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every parameter (zeros where it has no influence)."""
    root = result.total if isinstance(result, LossResult) else result
    for t in params.values():
        t.grad = None
    root.backward()
    grads = {}
    for name, t in params.items():
        g = np.zeros_like(t.data) if t.grad is None else t.grad
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
        grads[name] = g
    return grads


# -- model wrapper ----------------------------------------------------------------


class Transformer:
    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.params = init_params(cfg, seed, dtype) if params is None else params
        check_params(self.params, cfg)

    def tensors(self) -> dict[str, Tensor]:
        return {n: Tensor(a, requires_grad=True, name=n) for n, a in self.params.items()}

    def astype(self, dtype) -> "Transformer":
        return Transformer(self.cfg, {n: a.astype(dtype) for n, a in self.params.items()})

    def num_parameters(self) -> int:
        return sum(a.size for a in self.params.values())

    def encode(self, src, train_mode: bool = False, rng=None, keep=None) -> Memory:
        p = {n: Tensor(a) for n, a in self.params.items()}
        with ag.no_grad():
            return encode_t(src, p, self.cfg, rng if train_mode else None, keep)

    def decode_logits(self, prefix, memory: Memory, train_mode: bool = False, rng=None) -> np.ndarray:
        p = {n: Tensor(a) for n, a in self.params.items()}
        with ag.no_grad():
            return decode_t(prefix, memory, p, self.cfg, rng if train_mode else None).data

    def logits(self, src, tgt_in) -> np.ndarray:
        return self.decode_logits(tgt_in, self.encode(src))

    def loss_and_grads(self, src, tgt_in, tgt_out, rng=None) -> tuple[LossResult, dict[str, np.ndarray]]:
        p = self.tensors()
        memory = encode_t(src, p, self.cfg, rng)
        result = loss(decode_t(tgt_in, memory, p, self.cfg, rng), tgt_out)
        return result, backward(result, p)

    def loss_value(self, src, tgt_in, tgt_out) -> LossResult:
        p = {n: Tensor(a) for n, a in self.params.items()}
        with ag.no_grad():
            memory = encode_t(src, p, self.cfg)
            return loss(decode_t(tgt_in, memory, p, self.cfg), tgt_out)

    # step-wise decoding interface shared with scripted test models
    def start(self, src_ids) -> Memory:
        return self.encode(src_ids)

    def next_log_probs(self, state: Memory, prefix: list[int]) -> np.ndarray:
        logits = self.decode_logits(np.asarray([prefix]), state)[0, -1]
        return ag.log_softmax(logits.astype(np.float64))


def iter_batches(n: int, batch_size: int) -> Iterator[slice]:
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def pad_batch(seqs: list[list[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def teacher_forcing(tgt_ids: list[int]) -> tuple[list[int], list[int]]:
    """Split ``[<bos>, y1..yM, <eos>]`` into decoder input and gold output."""
    if not tgt_ids or tgt_ids[0] != BOS:
        raise ModelError("target sequence must start with <bos>")
    return tgt_ids[:-1], tgt_ids[1:]
