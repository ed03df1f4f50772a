"""Regenerate the frozen high-precision constants used across the tests.

Each value is recomputed in 40-digit arithmetic by a route independent of
the package (series, bisection, quadrature) and compared with the literal
frozen in the test modules.
"""

import pytest

mp = pytest.importorskip("mpmath")

import test_distributions as td  # noqa: E402
import test_hier_gibbs as th  # noqa: E402
import test_quantile_map as tq  # noqa: E402

mp.mp.dps = 40


def phi_series(x):
    """Normal CDF from the Maclaurin series of erf."""
    z = mp.mpf(x) / mp.sqrt(2)
    s = mp.mpf(0)
    for n in range(120):
        s += (-1) ** n * z ** (2 * n + 1) / (mp.factorial(n) * (2 * n + 1))
    return (1 + 2 / mp.sqrt(mp.pi) * s) / 2


def bisect(f, target, lo, hi, steps=200):
    for _ in range(steps):
        mid = (lo + hi) / 2
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def t5_density(x, c):
    nu = mp.mpf(5)
    z = x / c
    k = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))
    return k * (1 + z * z / nu) ** (-(nu + 1) / 2) / c


def close(a, b, tol=1e-15):
    return abs(mp.mpf(a) - b) <= tol * max(1, abs(b))


def test_normal_constants():
    assert close(td.PHI_196, phi_series(mp.mpf("1.96")))
    assert close(td.PHI_INV_0975, bisect(phi_series, mp.mpf("0.975"), mp.mpf(1), mp.mpf(3)))
    assert close(tq.PHI_HALF, phi_series(mp.mpf("0.5")))


def test_scaled_t_constants():
    c = 2 / mp.sqrt(mp.mpf(5) / 3)
    assert close(td.SCALED_T_C, c)
    for x, v in td.SCALED_T_LOGPDF.items():
        assert close(v, mp.log(t5_density(mp.mpf(x), c)))
    cdf = lambda x: mp.mpf(1) / 2 + mp.quad(lambda s: t5_density(s, c), [0, x])
    assert close(td.SCALED_T_CDF1, cdf(mp.mpf(1)))
    assert close(td.SCALED_T_Q90, bisect(cdf, mp.mpf("0.9"), mp.mpf(0), mp.mpf(10), steps=140), tol=1e-14)


def test_truncated_gamma_mean():
    f = lambda x: x ** 2 * mp.exp(-2 * x)
    m = mp.quad(lambda x: x * f(x), [1, mp.inf]) / mp.quad(f, [1, mp.inf])
    assert close(td.TRUNC_GAMMA_MEAN_3_2_1, m)


@pytest.mark.parametrize("key", sorted(th.LAPLACE_COND))
def test_laplace_conditional_moments(key):
    y, eta = map(mp.mpf, key)
    f = lambda t: mp.exp(-(y - t) ** 2 / 2 - abs(t) / eta)
    z = mp.quad(f, [-mp.inf, 0, mp.inf])
    m = mp.quad(lambda t: t * f(t), [-mp.inf, 0, mp.inf]) / z
    v = mp.quad(lambda t: (t - m) ** 2 * f(t), [-mp.inf, 0, mp.inf]) / z
    mean, var = th.LAPLACE_COND[key]
    assert close(mean, m) and close(var, v)
