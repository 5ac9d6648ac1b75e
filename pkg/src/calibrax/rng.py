"""Bit-exact random streams.

Every variate is derived from raw 64-bit words of a PCG64 generator using
only IEEE-754 double arithmetic, so a seed pins the produced data on any
platform.  numpy is used purely as the source of raw words.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53
_TWO_M64 = 2.0 ** -64
_BLOCK = 4096


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Scramble a base seed with cell indices into an independent 64-bit seed.

    The result depends only on its arguments, never on call order.
    """
    h = splitmix64(base_seed & MASK64)
    for i in indices:
        h = splitmix64(h ^ (i & MASK64))
    return h


class RandomStream:
    """Sequential source of uniforms, normals and gamma/beta variates."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._bits = np.random.PCG64(self.seed)
        self._buf: list[int] = []
        self._pos = 0

    def next_u64(self) -> int:
        if self._pos >= len(self._buf):
            self._buf = self._bits.random_raw(_BLOCK).tolist()
            self._pos = 0
        word = self._buf[self._pos]
        self._pos += 1
        return word

    def uniform(self) -> float:
        """Uniform double strictly inside (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * _TWO_M53

    def bernoulli(self, p: float) -> int:
        # h = 1 iff u64 / 2**64 < p
        return 1 if self.next_u64() * _TWO_M64 < p else 0

    def normal(self) -> float:
        # Marsaglia polar method; the second variate is discarded.
        while True:
            u = 2.0 * self.uniform() - 1.0
            v = 2.0 * self.uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                return u * math.sqrt(-2.0 * math.log(s) / s)

    def log_gamma_variate(self, shape: float) -> float:
        """Logarithm of a Gamma(shape, 1) draw (Marsaglia-Tsang).

        Shapes below one are boosted: G(a) = G(a + 1) * U**(1/a).  Working
        in log space keeps tiny variates representable.
        """
        if shape < 1.0:
            boost = math.log(self.uniform()) / shape
            return self.log_gamma_variate(shape + 1.0) + boost
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform()
            x2 = x * x
            if u < 1.0 - 0.0331 * x2 * x2 or math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
                return math.log(d * v)

    def beta(self, a1: float, a2: float) -> float:
        lx = self.log_gamma_variate(a1)
        ly = self.log_gamma_variate(a2)
        # x / (x + y) = 1 / (1 + exp(ly - lx))
        t = ly - lx
        if t > 0.0:
            e = math.exp(-t)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(t))
