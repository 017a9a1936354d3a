"""Deterministic, splittable random number generation.

All procedural generation in this package draws from SplitMix64 rather than
the interpreter's RNG, so that a (seed, config) pair produces bit-identical
output on every platform and interpreter version.  The constants below are
the standard SplitMix64 constants (Steele, Lea & Flood 2014).
"""

from __future__ import annotations

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK
    return h


class SplitMix64:
    """Seedable 64-bit generator with labelled child streams."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def split(self, label: str) -> "SplitMix64":
        """Derive an independent child stream; advances this stream once."""
        return SplitMix64(self.next_u64() ^ _fnv1a(label))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa; in [lo, hi)
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + u * (hi - lo)

    def randint(self, lo: int, hi: int) -> int:
        """Inclusive on both ends."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.next_u64() % len(seq)]

    def shuffle(self, items: list) -> None:
        # Fisher-Yates
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
