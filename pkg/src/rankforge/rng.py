"""Deterministic random streams built on splitmix64.

Every random decision in the toolkit flows through these helpers so that runs
are bit-reproducible and independent substreams can be derived from
(seed, counter...) keys without replaying earlier draws.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit mix."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def substream(seed: int, *keys: int) -> int:
    """Derive an independent stream seed from a base seed and integer keys.

    Folding each key through mix64 gives a counter-based scheme: substream
    (seed, epoch, ordinal) is reproducible without generating any other
    stream first.
    """
    state = mix64(seed)
    for key in keys:
        state = mix64(state ^ ((key * _GOLDEN) & _MASK64))
    return state


class SplitMix64:
    """splitmix64 sequence generator with small sampling utilities."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased uniform integer in [0, n) via masked rejection."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        mask = (1 << n.bit_length()) - 1
        while True:
            v = self.next_u64() & mask
            if v < n:
                return v

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k distinct elements drawn without replacement (partial Fisher-Yates)."""
        n = len(items)
        if k > n:
            raise ValueError(f"cannot sample {k} from {n} items")
        pool = list(items)
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def gauss(self) -> float:
        """Standard normal deviate (Box-Muller, one value per call)."""
        u1 = max(self.uniform(), 2.0**-53)
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
