"""Randomness sources.

Production code draws from the OS CSPRNG.  Tests inject a seeded
:class:`DeterministicRng` so transcripts and golden vectors are reproducible.
"""

from __future__ import annotations

import hashlib
import random
import secrets


class SystemRng:
    """CSPRNG-backed source used by default everywhere."""

    def bytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)

    def below(self, n: int) -> int:
        return secrets.randbelow(n)

    def sample(self, population, k: int) -> list:
        pool = list(population)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.below(len(pool))))
        return out


class DeterministicRng(SystemRng):
    """Seeded stream for tests and benchmarks. Never use for real keys."""

    def __init__(self, seed: int | bytes | str = 0) -> None:
        if isinstance(seed, str):
            seed = seed.encode()
        if isinstance(seed, bytes):
            seed = int.from_bytes(hashlib.sha256(seed).digest(), "big")
        self._r = random.Random(seed)

    def bytes(self, n: int) -> bytes:
        return self._r.getrandbits(8 * n).to_bytes(n, "big") if n else b""

    def below(self, n: int) -> int:
        return self._r.randrange(n)

    def fork(self, label: str) -> "DeterministicRng":
        return DeterministicRng(self.bytes(16) + label.encode())


default_rng = SystemRng()
