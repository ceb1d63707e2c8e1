"""Counter-based per-shot random streams.

Every random draw is a pure function of (seed, shot index, draw index), so
sampling is reproducible regardless of how shots are split across workers.
The mixer is SplitMix64, which is cheap enough to run per draw in pure
Python and statistically solid at the shot counts used here.
"""
from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: one 64-bit integer in, one out."""
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class ShotRng:
    """Deterministic stream keyed by (seed, shot); draws are counted."""

    __slots__ = ("_seed_mix", "_key", "_count")

    def __init__(self, seed: int, shot: int = 0):
        self._seed_mix = mix64(seed & _MASK)
        self._key = 0
        self._count = 0
        self.reset(shot)

    def reset(self, shot: int) -> None:
        self._key = mix64(self._seed_mix ^ (shot & _MASK))
        self._count = 0

    def next_u64(self) -> int:
        c = self._count
        self._count = c + 1
        x = (self._key + c * _GOLDEN) & _MASK
        x = (x + _GOLDEN) & _MASK
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
        return x ^ (x >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1)."""
        c = self._count
        self._count = c + 1
        x = (self._key + c * _GOLDEN + _GOLDEN) & _MASK
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
        return (x ^ (x >> 31)) * 5.421010862427522e-20  # 2**-64

    def bit(self) -> int:
        c = self._count
        self._count = c + 1
        x = (self._key + c * _GOLDEN + _GOLDEN) & _MASK
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
        return (x ^ (x >> 31)) >> 63

    def exponential(self) -> float:
        """Unit-rate exponential draw."""
        return -math.log1p(-self.uniform())

    @property
    def draws(self) -> int:
        return self._count
