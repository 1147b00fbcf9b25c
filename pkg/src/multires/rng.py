"""Counter-based deterministic random streams.

A stream is identified by a tuple of stable keys (seed, image id, class,
object index, ...). Block ``k`` of the stream is ``blake2b(key || k)``, so a
draw depends only on its key and position, never on how many other streams
were consumed before it.
"""

from __future__ import annotations

import hashlib
import math
import struct
from statistics import NormalDist

_STD_NORMAL = NormalDist()
_WORDS_PER_BLOCK = 8
_INV_2_53 = 1.0 / (1 << 53)


def derive_key(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=32, person=b"multires-rng")
    for part in parts:
        data = repr(part).encode("utf-8")
        h.update(struct.pack("<I", len(data)))
        h.update(data)
    return h.digest()


def derive_seed(*parts) -> int:
    """A 64-bit integer seed from arbitrary stable keys."""
    return int.from_bytes(derive_key(*parts)[:8], "little")


class CounterStream:
    """Uniform, normal and Poisson variates from one keyed stream."""

    __slots__ = ("_key", "_block", "_words", "_pos")

    def __init__(self, *parts):
        self._key = derive_key(*parts)
        self._block = 0
        self._words: tuple[int, ...] = ()
        self._pos = _WORDS_PER_BLOCK

    def _next_word(self) -> int:
        if self._pos >= _WORDS_PER_BLOCK:
            digest = hashlib.blake2b(
                self._block.to_bytes(8, "little"), digest_size=64, key=self._key
            ).digest()
            self._words = struct.unpack("<8Q", digest)
            self._block += 1
            self._pos = 0
        w = self._words[self._pos]
        self._pos += 1
        return w

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform on the open interval (low, high)."""
        u = ((self._next_word() >> 11) + 0.5) * _INV_2_53
        return low + (high - low) * u

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        return mean + std * _STD_NORMAL.inv_cdf(self.uniform())

    def poisson(self, lam: float) -> int:
        """Poisson count by CDF inversion of a single uniform."""
        if lam < 0:
            raise ValueError("Poisson rate must be non-negative")
        if lam == 0:
            return 0
        u = self.uniform()
        k, p = 0, math.exp(-lam)
        cdf = p
        while u > cdf and p > 0:
            k += 1
            p *= lam / k
            cdf += p
        return k
