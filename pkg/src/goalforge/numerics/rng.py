"""Counter-based random streams.

Built on numpy's Philox generator: the 128-bit key is (seed, stream_id), so
streams with distinct ids never share draws, and a (seed, stream_id) pair
replays the identical bit sequence on any platform with IEEE float64.
Purpose-labeled substreams hash their label into the stream id.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def label_id(label: str) -> int:
    """Stable 64-bit id for a purpose label."""
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


class RngStream:
    """One reproducible draw sequence, identified by (seed, stream_id)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.counter = 0
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, label: str) -> "RngStream":
        """Independent child stream; same label always yields the same child."""
        return RngStream(self.seed, (self.stream_id * 0x9E3779B97F4A7C15 + label_id(label)) & _MASK64)

    def normal(self, shape=()) -> np.ndarray:
        self.counter += 1
        return self._gen.standard_normal(shape)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, shape=()) -> np.ndarray:
        self.counter += 1
        return self._gen.uniform(lo, hi, shape)

    def integers(self, n: int, shape=()) -> np.ndarray:
        """Uniform integers in [0, n)."""
        self.counter += 1
        return self._gen.integers(0, n, size=shape)

    def choice_prob(self, p: np.ndarray) -> int:
        """Draw one index with the given (normalized) probabilities."""
        p = np.asarray(p, dtype=np.float64)
        u = float(self.uniform())
        return int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right").clip(0, len(p) - 1))

    def permutation(self, n: int) -> np.ndarray:
        self.counter += 1
        return self._gen.permutation(n)
