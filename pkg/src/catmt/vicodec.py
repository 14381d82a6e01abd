"""Reversible ASCII encoding of precomposed Vietnamese letters.

Each of the 134 letters becomes ``@<index>``, where the index is the letter's
1-based rank by code point. The scheme has no terminator, so ``decode``
resolves digit runs greedily (3, then 2, then 1 digits).
"""

from __future__ import annotations

import logging
import unicodedata
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

log = logging.getLogger(__name__)

TABLE_SIZE = 134

# Vietnamese letters in Latin-1, by code point
_LATIN1 = "ÀÁÂÃÈÉÊÌÍÒÓÔÕÙÚÝàáâãèéêìíòóôõùúý"
# Latin Extended-A: Ă ă Đ đ Ĩ ĩ Ũ ũ Ơ ơ Ư ư
_EXT_A = "ĂăĐđĨĩŨũƠơƯư"
# Latin Extended Additional, U+1EA0..U+1EF9
_EXT_ADDITIONAL = "".join(chr(c) for c in range(0x1EA0, 0x1EFA))


class DiacriticTable(NamedTuple):
    letters: tuple[str, ...]  # letters[i - 1] has index i

    def letter_of(self, index: int) -> str:
        if not 1 <= index <= len(self.letters):
            raise KeyError(index)
        return self.letters[index - 1]

    def index_of(self, letter: str) -> int:
        return _index_map(self)[letter]

    def entries(self) -> list[tuple[int, str]]:
        return list(enumerate(self.letters, start=1))

    def to_tsv(self) -> str:
        return "".join(f"{i}\t{ch}\tU+{ord(ch):04X}\n" for i, ch in self.entries())


class CodecResult(NamedTuple):
    text: str
    warnings: list[str]


@lru_cache(maxsize=None)
def build_table() -> DiacriticTable:
    letters = sorted(set(_LATIN1 + _EXT_A + _EXT_ADDITIONAL))
    assert len(letters) == TABLE_SIZE, len(letters)
    return DiacriticTable(tuple(letters))


@lru_cache(maxsize=None)
def _index_map(table: DiacriticTable) -> dict[str, int]:
    return {ch: i for i, ch in enumerate(table.letters, start=1)}


def load_table_file() -> DiacriticTable:
    """Parse the committed ``diacritics.tsv`` audit file."""
    raw = resources.files("catmt.data").joinpath("diacritics.tsv").read_text("utf-8")
    letters = []
    for n, line in enumerate(raw.splitlines(), start=1):
        index, letter, _hex = line.split("\t")
        if int(index) != n:
            raise ValueError(f"diacritics.tsv line {n}: index {index} out of order")
        letters.append(letter)
    return DiacriticTable(tuple(letters))


def encode_checked(text: str, table: DiacriticTable | None = None) -> CodecResult:
    table = table or build_table()
    index = _index_map(table)
    out = []
    warnings = []
    for ch in unicodedata.normalize("NFC", text):
        i = index.get(ch)
        if i is not None:
            out.append(f"@{i}")
        else:
            if ord(ch) > 0x7F:
                warnings.append(f"character {ch!r} (U+{ord(ch):04X}) is not in the diacritic table")
            out.append(ch)
    return CodecResult("".join(out), warnings)


def encode(text: str, table: DiacriticTable | None = None) -> str:
    result = encode_checked(text, table)
    for w in result.warnings:
        log.warning(w)
    return result.text


def decode_checked(text: str, table: DiacriticTable | None = None) -> CodecResult:
    table = table or build_table()
    size = len(table.letters)
    out = []
    warnings = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch != "@":
            out.append(ch)
            i += 1
            continue
        run = 0
        while run < 3 and i + 1 + run < n and text[i + 1 + run].isascii() and text[i + 1 + run].isdigit():
            run += 1
        for width in range(run, 0, -1):
            digits = text[i + 1 : i + 1 + width]
            if digits[0] != "0" and 1 <= int(digits) <= size:
                out.append(table.letters[int(digits) - 1])
                i += 1 + width
                break
        else:
            warnings.append(f"unresolvable '@' at offset {i}")
            out.append("@")
            i += 1
    return CodecResult("".join(out), warnings)


def decode(text: str, table: DiacriticTable | None = None) -> str:
    result = decode_checked(text, table)
    for w in result.warnings:
        log.warning(w)
    return result.text
