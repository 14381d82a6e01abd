"""Word-level vocabularies and text <-> id conversion."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
MAX_LEN = 16

Side = Literal["source", "target"]


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    lowercase: bool = False

    def __post_init__(self) -> None:
        if self.id_to_token[: len(SPECIALS)] != SPECIALS:
            raise VocabError("reserved symbols must occupy ids 0..3")
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise VocabError("duplicate token in vocabulary")
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.id_to_token)})

    def __len__(self) -> int:
        return len(self.id_to_token)

    def normalize(self, text: str) -> list[str]:
        return (text.lower() if self.lowercase else text).split()

    def to_text(self) -> str:
        return "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self.id_to_token))

    def digest(self) -> bytes:
        h = hashlib.sha256(b"lower" if self.lowercase else b"cased")
        h.update(self.to_text().encode("utf-8"))
        return h.digest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, lowercase: bool = False) -> "Vocab":
        """The file carries no case mode; callers pass it from the checkpoint header."""
        tokens = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
            tok, _, idx = line.rpartition("\t")
            if not _ or int(idx) != n:
                raise VocabError(f"{path}:{n + 1}: expected token<TAB>{n}")
            tokens.append(tok)
        return cls(tuple(tokens), lowercase)


def build_vocab(texts: Iterable[str], case_sensitive: bool = True, min_count: int = 1) -> Vocab:
    """Ids after the reserved block go by descending count, then token order."""
    counts = Counter()
    for text in texts:
        counts.update(text.split() if case_sensitive else text.lower().split())
    for s in SPECIALS:
        counts.pop(s, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(SPECIALS + tuple(kept), lowercase=not case_sensitive)


def encode_ids(text: str, vocab: Vocab, add_specials: bool = True, max_len: int = MAX_LEN) -> list[int]:
    ids = [vocab.token_to_id.get(tok, UNK) for tok in vocab.normalize(text)[:max_len]]
    return [BOS, *ids, EOS] if add_specials else ids


def decode_ids(ids: Iterable[int], vocab: Vocab) -> str:
    out = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise VocabError(f"id {i} outside vocabulary of size {len(vocab)}")
        if i in (PAD, BOS, EOS):
            continue
        out.append(vocab.id_to_token[i])
    return " ".join(out)


def content_length(ids: Iterable[int]) -> int:
    return sum(1 for i in ids if i not in (PAD, BOS, EOS))
