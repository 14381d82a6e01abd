"""Parallel category-pair datasets: storage, splitting and descriptive statistics."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from . import vicodec
from .rng import SplitMix64

log = logging.getLogger(__name__)

DEFAULT_SEED = 42


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryPair:
    source: str
    target: str
    encoded_target: str = ""
    qid: str | None = None

    def __post_init__(self) -> None:
        if not self.source.strip() or not self.target.strip():
            raise CorpusError("source and target must be non-empty")
        expected = vicodec.encode(self.target)
        if not self.encoded_target:
            object.__setattr__(self, "encoded_target", expected)
        elif self.encoded_target != expected:
            raise CorpusError(f"encoded_target mismatch for {self.target!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)

    def to_json(self) -> str:
        d = asdict(self)
        if d["qid"] is None:
            del d["qid"]
        return json.dumps(d, ensure_ascii=False)


@dataclass
class Dataset:
    """Ordered, duplicate-free collection of pairs (keyed on ``(source, target)``)."""

    pairs: list[CategoryPair] = field(default_factory=list)

    def __post_init__(self) -> None:
        pairs, self.pairs, self._seen = self.pairs, [], set()
        for p in pairs:
            self.add(p)

    def add(self, pair: CategoryPair) -> bool:
        if pair.key in self._seen:
            return False
        self._seen.add(pair.key)
        self.pairs.append(pair)
        return True

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[CategoryPair]:
        return iter(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Dataset) and self.pairs == other.pairs

    def sources(self) -> list[str]:
        return [p.source for p in self.pairs]

    def targets(self) -> list[str]:
        return [p.target for p in self.pairs]


def save(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in dataset:
            f.write(pair.to_json() + "\n")


def load(path: str | Path) -> Dataset:
    ds = Dataset()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise TypeError("record is not an object")
                pair = CategoryPair(
                    source=_str_field(obj, "source"),
                    target=_str_field(obj, "target"),
                    encoded_target=_str_field(obj, "encoded_target", ""),  # derived when absent
                    qid=obj.get("qid"),
                )
            except (ValueError, TypeError, KeyError) as e:
                raise CorpusError(f"{path}:{lineno}: malformed record ({e})") from e
            if not ds.add(pair):
                log.warning("%s:%d: duplicate pair %r skipped", path, lineno, pair.key)
    return ds


def _str_field(obj: dict, name: str, default: str | None = None) -> str:
    value = obj[name] if default is None else obj.get(name, default)
    if not isinstance(value, str):
        raise TypeError(f"field {name!r} must be a string")
    return value


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[Fraction, Fraction, Fraction] = (Fraction(8, 10), Fraction(1, 10), Fraction(1, 10))
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        ratios = tuple(Fraction(r) for r in self.ratios)
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise CorpusError("need three non-negative ratios")
        if sum(ratios) != 1:
            raise CorpusError(f"ratios must sum to 1, got {sum(ratios)}")
        object.__setattr__(self, "ratios", ratios)

    @classmethod
    def parse(cls, text: str, seed: int = DEFAULT_SEED) -> "SplitSpec":
        """Accept ``8:1:1`` style weights or ``0.8,0.1,0.1`` fractions."""
        parts = text.replace(",", ":").split(":")
        if len(parts) != 3:
            raise CorpusError(f"expected three ratios, got {text!r}")
        weights = [Fraction(p.strip()) for p in parts]
        total = sum(weights)
        if total <= 0:
            raise CorpusError("ratios must have a positive sum")
        if any("." in p for p in parts) and total != 1:
            raise CorpusError(f"fractional ratios must sum to 1, got {float(total)}")
        return cls(tuple(w / total for w in weights), seed)


def split_sizes(n: int, ratios: Sequence[Fraction]) -> tuple[int, int, int]:
    val = int(n * ratios[1])  # floor, exact for Fractions
    test = int(n * ratios[2])
    return n - val - test, val, test


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    if len(dataset) == 0:
        raise CorpusError("cannot split an empty dataset")
    order = list(dataset.pairs)
    SplitMix64(spec.seed).shuffle(order)
    n_train, n_val, _ = split_sizes(len(order), spec.ratios)
    return (
        Dataset(order[:n_train]),
        Dataset(order[n_train : n_train + n_val]),
        Dataset(order[n_train + n_val :]),
    )


def tokenize(text: str) -> list[str]:
    return text.split()


@dataclass
class CorpusStats:
    max_source_len: int = 0
    max_target_len: int = 0
    vocab_source_sensitive: int = 0
    vocab_target_sensitive: int = 0
    vocab_source_insensitive: int = 0
    vocab_target_insensitive: int = 0
    top_source_words: list[tuple[str, int]] = field(default_factory=list)
    top_target_words: list[tuple[str, int]] = field(default_factory=list)
    rare_source_words: list[tuple[str, int]] = field(default_factory=list)
    rare_target_words: list[tuple[str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        rows = [
            ("Maximum length of sources", self.max_source_len),
            ("Maximum length of targets", self.max_target_len),
            ("Vocabulary size in sources (sensitive)", self.vocab_source_sensitive),
            ("Vocabulary size in targets (sensitive)", self.vocab_target_sensitive),
            ("Vocabulary size in sources (insensitive)", self.vocab_source_insensitive),
            ("Vocabulary size in targets (insensitive)", self.vocab_target_insensitive),
            ("Popular words in sources", _words(self.top_source_words)),
            ("Popular words in targets", _words(self.top_target_words)),
            ("Rare words in sources", _words(self.rare_source_words)),
            ("Rare words in targets", _words(self.rare_target_words)),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _words(items: Iterable[tuple[str, int]]) -> str:
    return ", ".join(w for w, _ in items)


def analyze(dataset: Dataset, k: int = 10) -> CorpusStats:
    if k < 1:
        raise CorpusError("k must be >= 1")
    if len(dataset) == 0:
        return CorpusStats()
    src = [tokenize(t) for t in dataset.sources()]
    tgt = [tokenize(t) for t in dataset.targets()]
    src_counts = Counter(w for toks in src for w in toks)
    tgt_counts = Counter(w for toks in tgt for w in toks)
    return CorpusStats(
        max_source_len=max(map(len, src)),
        max_target_len=max(map(len, tgt)),
        vocab_source_sensitive=len(src_counts),
        vocab_target_sensitive=len(tgt_counts),
        vocab_source_insensitive=len({w.lower() for w in src_counts}),
        vocab_target_insensitive=len({w.lower() for w in tgt_counts}),
        top_source_words=sorted(src_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k],
        top_target_words=sorted(tgt_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k],
        rare_source_words=sorted(src_counts.items(), key=lambda kv: (kv[1], kv[0]))[:k],
        rare_target_words=sorted(tgt_counts.items(), key=lambda kv: (kv[1], kv[0]))[:k],
    )
