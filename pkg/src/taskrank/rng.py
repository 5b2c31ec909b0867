"""Portable deterministic PRNG for the random selection baseline.

The generator is SplitMix64 (Steele, Lea & Flood's 64-bit mixer as used in
Java's ``SplittableRandom``): state advances by the golden-gamma constant
0x9E3779B97F4A7C15 and each output is the finalizer

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

All arithmetic is modulo 2**64. Bounded draws use rejection sampling on the
top of the 64-bit range, and shuffles are descending Fisher-Yates, so any
implementation of the same three constants reproduces the same permutations
bit for bit. Seeds for sub-streams are derived by hashing string/int tokens
with FNV-1a and mixing the result into the master seed.
"""

from __future__ import annotations

from typing import Iterable, Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

T = TypeVar("T")


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(master: int, *tokens: str | int) -> int:
    """Deterministic sub-stream seed from a master seed and context tokens."""
    h = mix64(master)
    for tok in tokens:
        if isinstance(tok, int):
            h = mix64(h ^ mix64(tok))
        else:
            h = mix64(h ^ fnv1a64(tok.encode("utf-8")))
    return h


class SplitMix64:
    """Sequential SplitMix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def below(self, bound: int) -> int:
        """Unbiased draw from [0, bound) via rejection on the top range."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = ((1 << 64) // bound) * bound
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound

    def shuffle(self, items: list) -> None:
        """In-place descending Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, items: Sequence[T]) -> list[T]:
        out = list(items)
        self.shuffle(out)
        return out

    def permutations(self, items: Sequence[T], count: int) -> Iterable[list[T]]:
        for _ in range(count):
            yield self.permutation(items)
