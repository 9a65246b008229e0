"""Seedable, platform-independent random number generation.

Episode sampling must be reproducible bit-for-bit across machines and across
implementations in other languages, so this module pins the exact algorithms
instead of relying on a runtime's default generator: a SplitMix64 finalizer
for deriving per-stream seeds and xoshiro256** for the streams themselves.
All arithmetic is unsigned 64-bit (masked Python ints).
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(value: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word."""
    z = (value + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream_seed(master_seed: int, stream_index: int) -> int:
    """Derive a per-stream 64-bit seed from a master seed and a counter.

    Distinct stream indices are guaranteed distinct outputs for a fixed
    master seed because the construction composes bijections with an XOR of
    a distinct word.
    """
    return mix64(mix64(master_seed & _MASK64) ^ ((stream_index + _GOLDEN) & _MASK64))


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** generator seeded via a SplitMix64 expansion.

    Integer outputs are exact and platform-independent; float helpers build
    on the integer stream with fixed formulas.
    """

    __slots__ = ("_s", "_gauss_spare")

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state = (state + _GOLDEN) & _MASK64
            s.append(mix64(state))
        if not any(s):
            s[0] = _GOLDEN
        self._s = s
        self._gauss_spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Unbiased uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow() requires n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k draws without replacement, in selection order.

        Partial Fisher-Yates on a copy; O(len(items)) memory, O(k) draws.
        """
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} items")
        pool = list(items)
        out = []
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
            out.append(pool[i])
        return out

    def gauss(self) -> float:
        """Standard normal deviate (Box-Muller, pair-cached)."""
        if self._gauss_spare is not None:
            z = self._gauss_spare
            self._gauss_spare = None
            return z
        # u1 in (0, 1] so the log is finite
        u1 = (self.next_u64() >> 11) * 2.0**-53
        u1 = 1.0 - u1
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_spare = r * math.sin(theta)
        return r * math.cos(theta)
