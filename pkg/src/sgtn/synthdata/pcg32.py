"""PCG32 (XSH-RR 64/32) so datasets regenerate identically in any language."""
from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_MULT = 6364136223846793005


class PCG32:
    def __init__(self, seed: int, stream: int = 54):
        self.state = 0
        self.inc = ((stream << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + (seed & _MASK64)) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def random(self) -> float:
        """Uniform float in [0, 1) with 32 bits of resolution."""
        return self.next_u32() / 4294967296.0

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def below(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` (Lemire-style rejection on the low bits)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        threshold = (-n & 0xFFFFFFFF) % n
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % n

    def integers(self, lo: int, hi: int) -> int:
        """Integer in the closed range ``[lo, hi]``."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def normal(self) -> float:
        """Standard normal via Box-Muller (one value per call, two draws)."""
        u1 = (self.next_u32() + 1.0) / 4294967297.0
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
