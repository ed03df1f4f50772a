import numpy as np
from numba import njit
from scipy import stats

from robustpost._rng import next_double, next_u64, seed_state, shuffle

MASK = (1 << 64) - 1


def reference_xoshiro(state, n):
    """Plain-Python xoshiro256** for comparison."""
    s = list(state)
    rotl = lambda x, k: ((x << k) | (x >> (64 - k))) & MASK
    out = []
    for _ in range(n):
        out.append(rotl((s[1] * 5) & MASK, 7) * 9 & MASK)
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


@njit
def _u64s(st, n):
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = next_u64(st)
    return out


@njit
def _doubles(st, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = next_double(st)
    return out


@njit
def _shuffles(st, k, n):
    out = np.empty((n, k), dtype=np.int64)
    buf = np.arange(k)
    for i in range(n):
        for j in range(k):
            buf[j] = j
        shuffle(buf, k, st)
        out[i] = buf
    return out


def test_matches_reference_stream():
    st = np.array([1, 2, 3, 4], dtype=np.uint64)
    got = _u64s(st, 50).tolist()
    assert got == reference_xoshiro([1, 2, 3, 4], 50)
    assert got[:4] == [11520, 0, 1509978240, 1215971899390074240]


def test_seeded_from_generator():
    a = seed_state(np.random.default_rng(3))
    b = seed_state(np.random.default_rng(3))
    assert np.array_equal(a, b) and np.any(a != 0)
    assert not np.array_equal(a, seed_state(np.random.default_rng(4)))


def test_doubles_uniform():
    x = _doubles(seed_state(np.random.default_rng(0)), 200_000)
    assert x.min() >= 0 and x.max() < 1
    assert stats.kstest(x, "uniform").pvalue > 1e-3


def test_shuffle_uniform_over_permutations():
    k, n = 4, 240_000
    rec = _shuffles(seed_state(np.random.default_rng(1)), k, n)
    codes = rec @ (k ** np.arange(k))
    _, counts = np.unique(codes, return_counts=True)
    assert counts.size == 24
    assert stats.chisquare(counts).pvalue > 1e-3
