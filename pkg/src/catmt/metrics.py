"""Corpus-level translation metrics on whitespace tokens, all on a 0..1 scale.

* BLEU-4: corpus-aggregated clipped n-gram precisions, uniform weights,
  brevity penalty ``exp(min(0, 1 - r/c))``; a zero numerator for an order is
  replaced by 0.1 before dividing. Orders with no hypothesis n-grams at all
  are dropped from the geometric mean.
* ROUGE-L: LCS-based F1 per pair, averaged over pairs.
* METEOR: exact unigram matching only. The alignment maximizes matches and,
  among those, minimizes chunks. ``F = 10PR / (R + 9P)``, penalty
  ``0.5 * (chunks / m) ** 3``, averaged over pairs.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from . import kernels, vicodec

BLEU_FLOOR = 0.1
MAX_ORDER = 4

Tokens = Sequence[str]


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPair:
    hypothesis: tuple[str, ...]
    reference: tuple[str, ...]

    @classmethod
    def from_text(cls, hyp: str, ref: str, lowercase: bool = False) -> "EvalPair":
        if lowercase:
            hyp, ref = hyp.lower(), ref.lower()
        return cls(tuple(hyp.split()), tuple(ref.split()))


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_details(pairs: Sequence[EvalPair]) -> dict:
    if not pairs:
        raise MetricError("BLEU needs at least one pair")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for p in pairs:
        hyp_len += len(p.hypothesis)
        ref_len += len(p.reference)
        for n in range(1, MAX_ORDER + 1):
            h = _ngrams(p.hypothesis, n)
            r = _ngrams(p.reference, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(p.hypothesis) - n + 1, 0)
    if hyp_len == 0:
        return {"bleu": 0.0, "precisions": [0.0] * MAX_ORDER, "brevity_penalty": 0.0, "hyp_len": 0, "ref_len": ref_len}
    # orders the hypotheses are too short to contain carry no evidence and are left out
    precisions = [(m if m > 0 else BLEU_FLOOR) / t for m, t in zip(matches, totals) if t > 0]
    bp = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    score = bp * math.exp(sum(math.log(p) for p in precisions) / len(precisions))
    return {"bleu": min(score, 1.0), "precisions": precisions, "brevity_penalty": bp, "hyp_len": hyp_len, "ref_len": ref_len}


def bleu(pairs: Sequence[EvalPair]) -> float:
    return bleu_details(pairs)["bleu"]


def _lcs(a: Tokens, b: Tokens) -> int:
    ids: dict[str, int] = {}
    return kernels.lcs_length([ids.setdefault(t, len(ids)) for t in a], [ids.setdefault(t, len(ids)) for t in b])


def rouge_l_pair(hyp: Tokens, ref: Tokens) -> float:
    lcs = _lcs(hyp, ref)
    p = lcs / len(hyp) if hyp else 0.0
    r = lcs / len(ref) if ref else 0.0
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def rouge_l(pairs: Sequence[EvalPair]) -> float:
    if not pairs:
        raise MetricError("ROUGE-L needs at least one pair")
    return sum(rouge_l_pair(p.hypothesis, p.reference) for p in pairs) / len(pairs)


def align(hyp: Tokens, ref: Tokens) -> tuple[int, int]:
    """(matches, chunks) of the best one-to-one exact alignment."""
    ref_positions: dict[str, tuple[int, ...]] = {}
    for j, tok in enumerate(ref):
        ref_positions[tok] = ref_positions.get(tok, ()) + (j,)

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int) -> tuple[int, int]:
        # returns (-matches, chunks) minimized over hyp[i:], prev = ref index matched by hyp[i-1] or -2
        if i == len(hyp):
            return (0, 0)
        skip = best(i + 1, used, -2)
        options = [skip]
        for j in ref_positions.get(hyp[i], ()):
            if used >> j & 1:
                continue
            neg_m, chunks = best(i + 1, used | (1 << j), j)
            options.append((neg_m - 1, chunks + (0 if j == prev + 1 else 1)))
        return min(options)

    neg_m, chunks = best(0, 0, -2)
    return -neg_m, chunks


def meteor_pair(hyp: Tokens, ref: Tokens) -> float:
    m, chunks = align(hyp, ref)
    if m == 0:
        return 0.0
    p = m / len(hyp)
    r = m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1 - 0.5 * (chunks / m) ** 3)


def meteor(pairs: Sequence[EvalPair]) -> float:
    if not pairs:
        raise MetricError("METEOR needs at least one pair")
    return sum(meteor_pair(p.hypothesis, p.reference) for p in pairs) / len(pairs)


@dataclass
class EvalReport:
    rouge_l: float
    bleu: float
    meteor: float
    pair_count: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format_table(self) -> str:
        rows = [("ROUGE-L", self.rouge_l), ("BLEU", self.bleu), ("METEOR", self.meteor)]
        lines = [f"{'metric':<8}  {'score':>6}"]
        lines += [f"{name:<8}  {value:>6.4f}" for name, value in rows]
        lines.append(f"{'pairs':<8}  {self.pair_count:>6d}")
        return "\n".join(lines)


def score_pairs(pairs: Sequence[EvalPair]) -> EvalReport:
    if not pairs:
        raise MetricError("nothing to evaluate (zero pairs)")
    return EvalReport(rouge_l(pairs), bleu(pairs), meteor(pairs), len(pairs))


def evaluate_lines(hyps: Sequence[str], refs: Sequence[str], lowercase: bool = False) -> EvalReport:
    """Score line-aligned texts after resolving diacritic codes on both sides."""
    if len(hyps) != len(refs):
        raise MetricError(f"line count mismatch: {len(hyps)} hypotheses vs {len(refs)} references")
    pairs = [EvalPair.from_text(vicodec.decode(h), vicodec.decode(r), lowercase) for h, r in zip(hyps, refs)]
    return score_pairs(pairs)


def evaluate(hyp_file: str | Path, ref_file: str | Path, lowercase: bool = False) -> EvalReport:
    hyps = Path(hyp_file).read_text(encoding="utf-8").splitlines()
    refs = Path(ref_file).read_text(encoding="utf-8").splitlines()
    return evaluate_lines(hyps, refs, lowercase)
