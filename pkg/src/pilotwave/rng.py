"""Counter-based random streams.

Every chain gets its own SplitMix64 stream. The stream seed of chain ``i``
under master seed ``M`` is the ``i``-th output of SplitMix64 seeded with
``M``; the ``c``-th uniform of a stream with seed ``S`` is the ``c``-th
SplitMix64 output seeded with ``S``, top 53 bits scaled to ``[0, 1)``.
Random access by counter makes results independent of how chains are
batched or distributed over workers.
"""

from __future__ import annotations

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1


def stream_seed(master: int, index: int) -> int:
    return int(kernels.stream_seeds(master & MASK64, index, 1)[0])


def stream_seeds(master: int, start: int, count: int) -> np.ndarray:
    return kernels.stream_seeds(master & MASK64, start, count)


def uniforms(seeds: np.ndarray, counter: int) -> np.ndarray:
    return kernels.uniforms(np.ascontiguousarray(seeds, dtype=np.uint64), counter)


class StreamRNG:
    """One chain's stream; ``uniform_at`` is random access, ``random`` sequential."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    @classmethod
    def for_chain(cls, master: int, index: int) -> "StreamRNG":
        return cls(stream_seed(master, index))

    def uniform_at(self, counter: int) -> float:
        return float(uniforms(np.array([self.seed], dtype=np.uint64), counter)[0])

    def random(self, size=None):
        if size is None:
            u = self.uniform_at(self.counter)
            self.counter += 1
            return u
        k = int(np.prod(size))
        seeds = np.full(k, self.seed, dtype=np.uint64)
        out = np.array([uniforms(seeds[:1], self.counter + i)[0] for i in range(k)])
        self.counter += k
        return out.reshape(size)

    def __repr__(self):
        return f"StreamRNG(seed={self.seed})"
