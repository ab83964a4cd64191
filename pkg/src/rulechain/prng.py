"""Deterministic pseudo-randomness for data generation, init, and shuffling.

Everything stochastic in this package flows through one generator so that
datasets, weight initializations, and shuffle orders are bit-reproducible
across runs, platforms, and reimplementations. The wire contract is:

* Core generator: SplitMix64. State is a 64-bit integer; each draw adds the
  constant 0x9E3779B97F4A7C15 and mixes the result with
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod 2**64).
* Doubles: ``(next_u64() >> 11) * 2**-53``, uniform in [0, 1).
* Bounded ints: rejection sampling. Draw u64 values until one is below the
  largest multiple of ``bound`` that fits in 64 bits, then reduce mod bound.
* Shuffle: Fisher-Yates, descending (for i = n-1 .. 1: swap i with
  randint(i + 1)).
* Stream derivation: ``derive_seed(root, *keys)`` hashes the root seed and a
  canonical encoding of the keys with blake2b (8-byte digest) and returns the
  digest as a little-endian integer. Derived streams are independent for
  distinct key tuples.

Reference vectors live in tests/test_prng.py.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(root: int, *keys) -> int:
    """Derive an independent 64-bit stream seed from a root seed and keys.

    Keys may be ints, strings, or bools; each is length-prefixed and
    type-tagged so distinct key tuples never collide by concatenation.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update((root & _MASK64).to_bytes(8, "little"))
    for key in keys:
        if isinstance(key, bool):
            h.update(b"b" + (b"\x01" if key else b"\x00"))
        elif isinstance(key, int):
            h.update(b"i" + (key & _MASK64).to_bytes(8, "little"))
        elif isinstance(key, str):
            raw = key.encode("utf-8")
            h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
        else:
            raise TypeError(f"unsupported stream key type: {type(key).__name__}")
    return int.from_bytes(h.digest(), "little")


class Stream:
    """A SplitMix64 stream with the draw primitives used across the package."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high)."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def randint(self, bound: int) -> int:
        """Unbiased integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle (descending)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        if not items:
            raise ValueError("cannot choose from an empty sequence")
        return items[self.randint(len(items))]

    def sample(self, items, k: int) -> list:
        """k distinct items, order randomized (partial Fisher-Yates)."""
        if k > len(items):
            raise ValueError(f"sample size {k} exceeds population {len(items)}")
        pool = list(items)
        out = []
        for _ in range(k):
            idx = self.randint(len(pool))
            out.append(pool.pop(idx))
        return out

    def derive(self, *keys) -> "Stream":
        """Child stream keyed off this stream's current state and the keys."""
        return Stream(derive_seed(self._state, *keys))
