"""Deterministic pseudo-random generator for phantom synthesis.

The generator is xoshiro256** (Blackman & Vigna) run over 1024 independent
lanes that advance in lockstep, which keeps bulk draws vectorized.  Lane
states are seeded from a single splitmix64 stream over the user seed: lane
``l`` takes splitmix64 outputs ``4l .. 4l+3`` as its four state words.  A
bulk draw of n values emits whole 1024-lane rows (lane-major within a row)
and keeps the remainder of the final row for the next draw, so the value
stream is a pure function of the seed and the order of draw calls.

Uniform doubles take the top 53 bits of each 64-bit output; normals come
from Box-Muller over uniform pairs.  These choices are frozen: identical
seeds reproduce bit-identical streams on any platform.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_LANES = 1024


def _splitmix64_stream(seed: int, count: int) -> list[int]:
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        out.append(z ^ (z >> 31))
    return out


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256StarStar:
    """Lane-parallel xoshiro256** with an explicit integer seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        words = _splitmix64_stream(self.seed, 4 * _LANES)
        state = np.array(words, dtype=np.uint64).reshape(_LANES, 4)
        self._s = [state[:, i].copy() for i in range(4)]
        self._buffer = np.empty(0, dtype=np.uint64)

    def _next_row(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def _raw(self, n: int) -> np.ndarray:
        if self._buffer.size >= n:
            out = self._buffer[:n]
            self._buffer = self._buffer[n:]
            return out
        chunks = [self._buffer]
        have = self._buffer.size
        while have < n:
            row = self._next_row()
            chunks.append(row)
            have += row.size
        flat = np.concatenate(chunks)
        self._buffer = flat[n:]
        return flat[:n]

    def uniform(self, shape) -> np.ndarray:
        """Doubles in [0, 1) with 53-bit resolution."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        bits = self._raw(n) >> np.uint64(11)
        return (bits * (2.0**-53)).reshape(shape)

    def normal(self, shape, sigma: float = 1.0) -> np.ndarray:
        """Standard normals via Box-Muller, scaled by sigma."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # (0, 1]: safe under log
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (sigma * z).reshape(shape)

    def uniform_scalar(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return float(lo + (hi - lo) * self.uniform(1)[0])

    def integer(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        return int(lo + int(self.uniform(1)[0] * (hi - lo + 1)))
