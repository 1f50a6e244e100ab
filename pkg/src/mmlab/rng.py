"""xoshiro256** streams seeded through SplitMix64.

The dataset file format promises identical bytes for identical seeds on any
platform, so generation cannot lean on numpy's bit generators (their stream
layout is a library detail). The kernels here are compiled with numba and
operate on a small state vector so they can be threaded through the
rejection-sampling loops in :mod:`mmlab.synthgen`.

State layout (``numpy.uint64[6]``)::

    [s0, s1, s2, s3, has_spare_gaussian, spare_gaussian_bits]

Gaussians come from Box-Muller on two uniforms; the sine branch is cached
and returned by the next call.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def seed_state(seed: int) -> np.ndarray:
    """Expand a 64-bit seed into a fresh xoshiro256** state vector."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    s = seed
    words = []
    for _ in range(4):
        s, out = splitmix64(s)
        words.append(out)
    state = np.zeros(6, dtype=np.uint64)
    state[:4] = np.array(words, dtype=np.uint64)
    return state


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def next_u64(state):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@njit(cache=True)
def next_double(state):
    """Uniform on [0, 1) with 53 random bits."""
    return np.float64(next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def next_gaussian(state):
    if state[4] != 0:
        state[4] = np.uint64(0)
        buf = np.empty(1, dtype=np.uint64)
        buf[0] = state[5]
        return buf.view(np.float64)[0]
    u1 = 1.0 - next_double(state)  # (0, 1], keeps log finite
    u2 = next_double(state)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    spare = np.empty(1, dtype=np.float64)
    spare[0] = r * np.sin(theta)
    state[4] = np.uint64(1)
    state[5] = spare.view(np.uint64)[0]
    return r * np.cos(theta)


@njit(cache=True)
def fill_uniform(state, out, low, high):
    flat = out.ravel()
    for i in range(flat.size):
        flat[i] = low + (high - low) * next_double(state)


@njit(cache=True)
def fill_gaussian(state, out):
    for i in range(out.size):
        out[i] = next_gaussian(state)


class Xoshiro256:
    """Thin Python handle around a state vector, for non-hot-path use."""

    def __init__(self, seed: int):
        self.seed = seed
        self.state = seed_state(seed)

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def random(self) -> float:
        return float(next_double(self.state))

    def gaussian(self) -> float:
        return float(next_gaussian(self.state))

    def permutation(self, n: int) -> np.ndarray:
        return _permutation(self.state, n)


@njit(cache=True)
def _permutation(state, n):
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = np.int64(next_double(state) * (i + 1))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm
