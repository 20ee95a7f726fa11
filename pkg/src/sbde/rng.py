"""Portable seeded random generator used everywhere determinism is promised.

The generator is pinned to a fixed, documented algorithm (not the stdlib or
numpy defaults) so that prompt sampling, augmentation policies, and split
assignments reproduce bit-for-bit across machines and across future
reimplementations in other languages:

  state   = splitmix64(seed)            (0 remapped to the splitmix constant)
  next()  = xorshift64* step:  s ^= s >> 12; s ^= s << 25; s ^= s >> 27;
            output (s * 0x2545F4914F6CDD1D) mod 2^64
  below(m): unbiased bounded draw by rejection (arc4random_uniform scheme)
  sampling/shuffling: Fisher-Yates driven by below()

``ALGORITHM_ID`` is recorded in run metadata so output provenance names the
exact generator.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
ALGORITHM_ID = "xorshift64star/splitmix64-seed/fisher-yates"

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    z = (x + _SPLITMIX_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(seed: int, *keys) -> int:
    """Fold string/int keys into a new 64-bit seed, deterministically.

    Used to give each batch item an independent stream from one run seed.
    """
    import hashlib

    h = _splitmix64(seed & MASK64)
    for key in keys:
        if isinstance(key, str):
            k = int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")
        else:
            k = int(key) & MASK64
        h = _splitmix64(h ^ k)
    return h


class PortableRng:
    """64-bit xorshift* generator with splitmix64 seed expansion."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        state = _splitmix64(seed & MASK64)
        # xorshift64* cycles on 0; the seeding constant is as good a state as any
        self._state = state if state != 0 else _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        s = self._state
        s ^= (s >> 12)
        s = (s ^ (s << 25)) & MASK64
        s ^= (s >> 27)
        self._state = s
        return (s * 0x2545F4914F6CDD1D) & MASK64

    def below(self, m: int) -> int:
        """Unbiased draw from [0, m)."""
        if m <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - m) % m
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % m

    def random(self) -> float:
        """53-bit float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """First k indices of a partial Fisher-Yates pass over range(n)."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        idx = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]
