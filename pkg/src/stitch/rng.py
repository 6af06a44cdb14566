"""Seeded randomness with named substreams.

Two layers, used for different jobs:

* ``Xoshiro256StarStar`` is a self-contained xoshiro256** generator
  (Blackman & Vigna 2018), state-seeded through SplitMix64 as the authors
  recommend.  Benchmark prompt sets are drawn from it so the same
  (task, n, seed) triple reproduces byte-identical output on any machine
  and any library version.
* ``noise_rng`` hands out NumPy generators for Gaussian noise.  Each
  stream is derived from the single run seed plus a label such as
  ``"noise/branch/3"`` (SHA-256 of ``"<seed>\\x1f<label>"``, first 8
  bytes little-endian), so concurrent branches draw independent,
  replayable streams regardless of scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """Portable 64-bit PRNG; all draws are integer arithmetic only."""

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s, value = _splitmix64(s)
            state.append(value)
        self._state = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._state
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._state = [s0, s1, s2, s3]
        return result

    def randbelow(self, n: int) -> int:
        # Modulo reduction; bias is < n / 2**64, negligible at vocab sizes.
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        return self.next_u64() % n

    def coin(self) -> bool:
        return bool(self.next_u64() & 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice on empty sequence")
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, high index downward.
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_distinct(self, seq, k: int) -> list:
        if k > len(seq):
            raise ValueError("not enough items to sample from")
        pool = list(seq)
        picked = []
        for _ in range(k):
            picked.append(pool.pop(self.randbelow(len(pool))))
        return picked


def derive_seed(root: int, label: str) -> int:
    digest = hashlib.sha256(f"{root}\x1f{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root: int, label: str) -> Xoshiro256StarStar:
    return Xoshiro256StarStar(derive_seed(root, label))


def noise_rng(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label))
