"""Autoregressive decoding and the English -> Vietnamese translation pipeline.

Decoders talk to a step model through two methods:

* ``start(src_ids) -> state``
* ``next_log_probs(state, prefix_ids) -> 1-D array of log-probabilities``

``Transformer`` implements them; tests plug in scripted models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Protocol, Sequence

import numpy as np

from . import vicodec
from .checkpoint import Checkpoint, load_checkpoint
from .model import Transformer
from .tokenizer import BOS, EOS, MAX_LEN, decode_ids, encode_ids


class StepModel(Protocol):
    def start(self, src_ids: Sequence[int]): ...

    def next_log_probs(self, state, prefix: list[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class DecodeConfig:
    strategy: Literal["greedy", "beam"] = "greedy"
    beam_size: int = 4
    max_len: int = MAX_LEN
    length_norm_alpha: float = 0.6

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.length_norm_alpha < 0:
            raise ValueError("length_norm_alpha must be >= 0")
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class Hypothesis:
    ids: list[int]
    log_prob: float = 0.0
    finished: bool = False

    @property
    def content(self) -> list[int]:
        return [i for i in self.ids[1:] if i != EOS]

    def score(self, alpha: float) -> float:
        if alpha == 0:
            return self.log_prob
        return self.log_prob / max(len(self.content), 1) ** alpha


def greedy_decode(src_ids: Sequence[int], model: StepModel, cfg: DecodeConfig = DecodeConfig()) -> Hypothesis:
    state = model.start(src_ids)
    hyp = Hypothesis([BOS])
    while True:
        logp = model.next_log_probs(state, hyp.ids)
        token = int(np.argmax(logp))  # first maximum, i.e. lowest id on ties
        hyp.ids.append(token)
        hyp.log_prob += float(logp[token])
        if token == EOS or len(hyp.ids) - 1 >= cfg.max_len:
            hyp.finished = True
            return hyp


@dataclass
class BeamResult:
    best: Hypothesis
    n_best: list[Hypothesis] = field(default_factory=list)


def beam_decode(src_ids: Sequence[int], model: StepModel, cfg: DecodeConfig = DecodeConfig()) -> BeamResult:
    """Keep the ``beam_size`` best extensions per step; hypotheses ending in ``<eos>`` retire.

    Candidates are ordered by accumulated log-probability, ties by token-id
    sequence. Finished hypotheses are ranked by ``log_prob / len**alpha``.
    """
    state = model.start(src_ids)
    alive = [Hypothesis([BOS])]
    finished: list[Hypothesis] = []
    while alive:
        candidates = []
        for hyp in alive:
            logp = model.next_log_probs(state, hyp.ids)
            for token in np.argsort(-logp, kind="stable")[: cfg.beam_size]:
                token = int(token)
                candidates.append(Hypothesis(hyp.ids + [token], hyp.log_prob + float(logp[token])))
        candidates.sort(key=lambda h: (-h.log_prob, h.ids))
        alive = []
        for cand in candidates[: cfg.beam_size]:
            if cand.ids[-1] == EOS or len(cand.ids) - 1 >= cfg.max_len:
                cand.finished = True
                finished.append(cand)
            else:
                alive.append(cand)
    finished.sort(key=lambda h: (-h.score(cfg.length_norm_alpha), h.ids))
    n_best = finished[: cfg.beam_size]
    return BeamResult(n_best[0], n_best)


def decode(src_ids: Sequence[int], model: StepModel, cfg: DecodeConfig = DecodeConfig()) -> Hypothesis:
    if cfg.strategy == "greedy":
        return greedy_decode(src_ids, model, cfg)
    return beam_decode(src_ids, model, cfg).best


def rescore(src_ids: Sequence[int], model: StepModel, ids: Sequence[int]) -> float:
    """Sum of step log-probabilities of ``ids[1:]`` given the preceding tokens."""
    state = model.start(src_ids)
    return float(sum(model.next_log_probs(state, list(ids[:i]))[ids[i]] for i in range(1, len(ids))))


@dataclass
class Translator:
    checkpoint: Checkpoint
    decode_cfg: DecodeConfig = DecodeConfig()

    def __post_init__(self) -> None:
        self.model = Transformer(self.checkpoint.config, self.checkpoint.params)

    @classmethod
    def load(cls, path: str | Path, decode_cfg: DecodeConfig = DecodeConfig()) -> "Translator":
        return cls(load_checkpoint(path), decode_cfg)

    def translate_encoded(self, text: str) -> str:
        """Source text to the diacritic-encoded target string."""
        src = encode_ids(text, self.checkpoint.src_vocab, add_specials=True, max_len=self.checkpoint.config.max_len)
        hyp = decode(src, self.model, self.decode_cfg)
        return decode_ids(hyp.ids, self.checkpoint.tgt_vocab)

    def translate(self, text: str) -> str:
        return vicodec.decode(self.translate_encoded(text))

    def translate_lines(self, lines: Iterable[str]) -> Iterable[str]:
        for line in lines:
            yield self.translate(line.rstrip("\n"))


def translate(text: str, translator: Translator) -> str:
    return translator.translate(text)
