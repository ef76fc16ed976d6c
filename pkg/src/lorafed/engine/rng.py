"""Named, independently seeded random streams.

Each stream is derived from (seed, name) through SHA-256, so adding a new
consumer never perturbs the draws of an existing one.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        s = self._streams.get(name)
        if s is None:
            s = random.Random(derive_seed(self.seed, name))
            self._streams[name] = s
        return s
