"""Counter-based random streams.

Every random decision in a simulation run is drawn from a stream keyed by
(seed, purpose, entities...).  The key is hashed with BLAKE2b into a Philox
counter key, so a draw depends only on its key and never on how many draws
happened before it.  This is what makes runs bit-identical regardless of
worker count or evaluation order.

Key parts must be ints or strings.  Floats are not accepted: callers that
need a float in a key (e.g. a prevalence value) must pass a canonical string
form, because float hashing would be repr-sensitive.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U53 = 2.0 ** -53


def _digest(seed: int, parts: tuple) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little", signed=True))
    for p in parts:
        if isinstance(p, str):
            b = p.encode("utf-8")
            h.update(b"\x01")
            h.update(len(b).to_bytes(2, "little"))
            h.update(b)
        elif isinstance(p, (int, np.integer)):
            h.update(b"\x02")
            h.update(int(p).to_bytes(8, "little", signed=True))
        else:
            raise TypeError(f"stream key parts must be int or str, got {type(p).__name__}")
    return h.digest()


class Streams:
    """Factory for deterministic, independently keyed random streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def uniform(self, *key) -> float:
        """One U[0,1) draw from the stream keyed by ``key``."""
        d = _digest(self.seed, key)
        return (int.from_bytes(d[:8], "little") >> 11) * _U53

    def uniform_pair(self, *key) -> tuple[float, float]:
        """Two independent U[0,1) draws from one keyed stream read."""
        d = _digest(self.seed, key)
        a = (int.from_bytes(d[:8], "little") >> 11) * _U53
        b = (int.from_bytes(d[8:], "little") >> 11) * _U53
        return a, b

    def bernoulli(self, p: float, *key) -> bool:
        return self.uniform(*key) < p

    def normal(self, *key) -> float:
        """One standard normal draw (Box-Muller) from the keyed stream."""
        u1, u2 = self.uniform_pair(*key)
        # u1 == 0 would make log blow up; the smallest representable draw is fine
        u1 = max(u1, _U53)
        return float(np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2))

    def generator(self, *key) -> np.random.Generator:
        """A full numpy Generator (Philox) for shuffles and vector draws."""
        d = _digest(self.seed, key)
        philox_key = np.frombuffer(d, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=philox_key))
