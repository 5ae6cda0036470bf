"""SplitMix64 pseudo-random generator.

Every random draw in the package (instance generation, destroy heuristics,
negative mining, weight init, batch shuffling) goes through :class:`Rng` so
that results are reproducible from a single integer seed on any platform.

The generator is Steele/Lea/Flood SplitMix64: the state advances by the
golden-ratio increment ``0x9E3779B97F4A7C15`` and each output is the state
passed through the standard two-multiply finalizer. Because the output is a
pure function of a counter, bulk draws are vectorized with numpy.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically derive a child seed from ``seed`` and integer keys."""
    s = seed & MASK64
    for k in keys:
        s = mix64((s + GOLDEN * ((k & MASK64) + 1)) & MASK64)
    return s


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def u64_array(self, size: int) -> np.ndarray:
        steps = np.arange(1, size + 1, dtype=np.uint64)
        z = np.uint64(self.state) + steps * np.uint64(GOLDEN)
        self.state = (self.state + GOLDEN * size) & MASK64
        return _mix64_array(z)

    def random(self, size: int | None = None):
        """Uniform float(s) in [0, 1) with 53 bits of precision."""
        if size is None:
            return (self.next_u64() >> 11) * _INV_2_53
        return (self.u64_array(size) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self, low: float, high: float, size: int | None = None):
        u = self.random(size)
        return low + (high - low) * u

    def integers(self, n: int) -> int:
        """Unbiased integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct integers from range(n), in draw order (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.integers(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def choice(self, seq):
        return seq[self.integers(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items

    def bernoulli(self, p: float, size: int) -> np.ndarray:
        return self.random(size) < p

    def binomial(self, n: int, p: float) -> int:
        if n == 0:
            return 0
        return int(np.count_nonzero(self.bernoulli(p, n)))

    def poisson(self, mean: float) -> int:
        # Knuth's multiplication method; means here are small (bundle sizes).
        if mean <= 0:
            return 0
        limit = math.exp(-mean)
        k, p = 0, 1.0
        while True:
            p *= self.random()
            if p <= limit:
                return k
            k += 1
