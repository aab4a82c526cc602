"""Seed derivation and partition-independent random streams.

Every stream is cut into fixed-size chunks; chunk ``i`` is drawn from
``SeedSequence(seed, spawn_key=(i,))``.  A result therefore depends only on the
master seed and never on how chunks are scheduled across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

CHUNK = 8192


def derive_seed(seed: int, *labels) -> int:
    """Stable 63-bit seed from a master seed and labels (not Python's salted hash)."""
    h = hashlib.sha256(repr((int(seed),) + tuple(str(x) for x in labels)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def chunk_bounds(n: int, chunk: int = CHUNK):
    for i, start in enumerate(range(0, n, chunk)):
        yield i, start, min(n, start + chunk)


def sample_points(sampler, n: int, seed: int, chunk: int = CHUNK) -> np.ndarray:
    """Concatenate ``sampler(rng, size)`` over deterministic chunks."""
    parts = [sampler(chunk_rng(seed, i), b - a) for i, a, b in chunk_bounds(n, chunk)]
    return np.concatenate(parts, axis=0)


class NormalStream:
    """Lazily generated i.i.d. N(0,1) array of shape ``(size, *shape)``.

    ``size=None`` means a single realization (realization 0 of the stream), so
    a single draw coincides with the first row of a batch drawn with the same
    seed.
    """

    MAX_CACHE = 2 * 10 ** 7

    def __init__(self, seed: int, shape: tuple[int, ...], size: int | None = None):
        self.seed = int(seed)
        self.shape = tuple(int(s) for s in shape)
        self.size = size
        per = max(1, int(np.prod(self.shape)))
        # chunk length is a pure function of the shape, so output is reproducible
        self.chunk = int(max(1, min(1024, 4 * 10 ** 6 // per)))
        self._cache = None

    @property
    def n(self) -> int:
        return 1 if self.size is None else int(self.size)

    def _chunk(self, i: int, length: int) -> np.ndarray:
        return chunk_rng(self.seed, i).standard_normal((length,) + self.shape)

    def chunks(self):
        """Yield (start, stop, array) blocks covering all realizations."""
        # identical block boundaries with or without the cache keep BLAS rounding identical
        for i, a, b in chunk_bounds(self.n, self.chunk):
            if self._cache is not None:
                yield a, b, self._cache[a:b]
            else:
                yield a, b, self._chunk(i, b - a)

    def array(self) -> np.ndarray:
        if self._cache is None:
            self._cache = np.concatenate([blk for _, _, blk in self.chunks()], axis=0)
        return self._cache if self.size is not None else self._cache[0]

    def contract(self, C: np.ndarray) -> np.ndarray:
        """sum over the per-realization axes of g * C[j] for each leading index j of C.

        ``C`` has shape ``(p, *shape)``; the result has shape ``(size, p)`` (or
        ``(p,)`` for a single realization).
        """
        C = np.asarray(C, dtype=float)
        p = C.shape[0]
        flatC = C.reshape(p, -1)
        if self._cache is None and self.n * flatC.shape[1] <= self.MAX_CACHE:
            self.array()
        out = np.empty((self.n, p))
        for a, b, blk in self.chunks():
            flat = blk.reshape(b - a, -1)
            # one matrix-vector product per output keeps each output's rounding
            # independent of how many outputs are evaluated together
            for j in range(p):
                out[a:b, j] = flat @ flatC[j]
        return out if self.size is not None else out[0]
