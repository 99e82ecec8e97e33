"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(key, counter)``, so any ray or placement
attempt can be regenerated independently of scheduling order. The key is the
64-bit user seed split into two 32-bit words; the 128-bit counter carries the
stream coordinates.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import InvalidArgumentError

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

# domain tags stored in the last counter word
TAG_SCENE = 0x5CE7E
TAG_SCAN = 0x5CA9

SEED_MAX = 2**64 - 1


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds. All inputs are 32-bit values held in uint64."""
    c0 = np.uint64(c0) & _MASK
    c1 = np.uint64(c1) & _MASK
    c2 = np.uint64(c2) & _MASK
    c3 = np.uint64(c3) & _MASK
    k0 = np.uint64(k0) & _MASK
    k1 = np.uint64(k1) & _MASK
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT
        lo0 = p0 & _MASK
        hi1 = p1 >> _SHIFT
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def words_to_unit(a, b):
    """Map two 32-bit words to a double in the open interval (0, 1)."""
    # 52 bits keep (k + 0.5) / 2**52 exactly representable and below 1
    hi = np.uint64(a) >> np.uint64(6)
    lo = np.uint64(b) >> np.uint64(6)
    return (float(hi) * 67108864.0 + float(lo) + 0.5) / 4503599627370496.0


@njit(cache=True, nogil=True)
def ray_uniforms(seed, frame_id, ray_index):
    """Three uniforms (dropout, gaussian u1, gaussian u2) for one ray."""
    s = np.uint64(seed)
    k0 = s & _MASK
    k1 = (s >> _SHIFT) & _MASK
    f0 = np.uint64(frame_id) & _MASK
    a0, a1, a2, a3 = philox4x32(ray_index, 0, f0, TAG_SCAN, k0, k1)
    b0, b1, b2, b3 = philox4x32(ray_index, 1, f0, TAG_SCAN, k0, k1)
    return words_to_unit(a0, a1), words_to_unit(a2, a3), words_to_unit(b0, b1)


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


class CounterRng:
    """Sequential view over a Philox stream.

    Block ``n`` of stream ``s`` is ``philox(counter=(n_lo, n_hi, s, TAG_SCENE),
    key=seed)``. Each block yields two doubles.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = check_seed(seed)
        self.stream = int(stream) & 0xFFFFFFFF
        self._block = 0
        self._buffer: list[float] = []

    def _refill(self) -> None:
        n = self._block
        self._block += 1
        w = philox4x32(
            np.uint64(n & 0xFFFFFFFF),
            np.uint64(n >> 32),
            np.uint64(self.stream),
            np.uint64(TAG_SCENE),
            np.uint64(self.seed & 0xFFFFFFFF),
            np.uint64(self.seed >> 32),
        )
        self._buffer = [words_to_unit(w[2], w[3]), words_to_unit(w[0], w[1])]

    def random(self) -> float:
        if not self._buffer:
            self._refill()
        return self._buffer.pop()

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high]."""
        span = high - low + 1
        return low + min(int(math.floor(self.random() * span)), span - 1)

    def derive_seed(self) -> int:
        """A fresh 64-bit seed drawn from this stream."""
        hi = int(self.random() * 2**32)
        lo = int(self.random() * 2**32)
        return (hi << 32) | lo
