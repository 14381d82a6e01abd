"""Deterministic pseudo-random numbers shared by every seeded operation.

SplitMix64: ``state += 0x9E3779B97F4A7C15`` then the 64-bit finalizer
``z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
z ^ (z >> 31)``, all arithmetic modulo 2**64. Bounded integers use rejection
sampling so they are unbiased. The algorithm is trivial to port, which keeps
dataset splits and sampled Q-ids reproducible outside Python.
"""

from __future__ import annotations

from typing import MutableSequence, TypeVar

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        # largest multiple of n that fits in 64 bits
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates, walking from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(seed: int, *salt: int) -> int:
    """Mix extra integers into a seed (for per-epoch or per-round streams)."""
    r = SplitMix64(seed)
    out = r.next_u64()
    for s in salt:
        r = SplitMix64(out ^ (s & MASK64))
        out = r.next_u64()
    return out
