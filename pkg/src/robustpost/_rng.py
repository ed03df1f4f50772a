"""xoshiro256** generator for the compiled inner loops.

Calling a numpy ``Generator`` from compiled code costs a function-pointer
hop per draw; the permutation sampler needs k random indices per step with
k in the hundreds, so the hot loops use this inline generator instead. Its
state is always seeded from the caller's numpy ``Generator``, which keeps
every chain a pure function of that generator.
"""

import numpy as np
from numba import njit, uint64

_SCALE = 1.0 / 9007199254740992.0  # 2**-53
_LOW32 = 0xFFFFFFFF


@njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(inline="always")
def next_u64(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    result = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3
    return result


@njit(inline="always")
def next_double(st):
    """Uniform on [0, 1) with 53 random bits."""
    return (next_u64(st) >> uint64(11)) * _SCALE


@njit(inline="always")
def _below(bits32, n):
    # multiply-shift range reduction; bias is at most n / 2**32
    return int((bits32 * uint64(n)) >> uint64(32))


@njit(inline="always")
def shuffle(buf, k, st):
    """Uniform in-place Fisher-Yates shuffle of ``buf[:k]``, two indices per 64-bit draw."""
    m = k - 1
    while m > 0:
        x = next_u64(st)
        r = _below(x & uint64(_LOW32), m + 1)
        tmp = buf[m]
        buf[m] = buf[r]
        buf[r] = tmp
        m -= 1
        if m > 0:
            r = _below(x >> uint64(32), m + 1)
            tmp = buf[m]
            buf[m] = buf[r]
            buf[r] = tmp
            m -= 1


def seed_state(rng: np.random.Generator) -> np.ndarray:
    """Fresh 256-bit state drawn from ``rng`` (never all zero)."""
    st = rng.integers(0, 2**64, size=4, dtype=np.uint64)
    if not st.any():
        st[0] = 1
    return st
