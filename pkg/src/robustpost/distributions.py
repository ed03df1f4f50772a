"""Distributions, special functions and random variate generation.

Every distribution is a small frozen dataclass. The module-level functions
``cdf``, ``quantile``, ``log_pdf`` and ``sample`` dispatch on the variant and
accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

__all__ = [
    "Normal",
    "Laplace",
    "ScaledT",
    "TruncatedHybrid",
    "InverseGamma",
    "Uniform",
    "Gamma",
    "DistSpec",
    "cdf",
    "quantile",
    "log_pdf",
    "sample",
    "hybrid_log_pdf",
    "sample_gamma_truncated",
    "sample_normal_truncated",
    "truncated_normal_mean",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        _check_positive(self.sd, "sd")


@dataclass(frozen=True)
class Laplace:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        _check_positive(self.scale, "scale")


@dataclass(frozen=True)
class ScaledT:
    """Student-t rescaled so that its standard deviation equals ``sd``."""

    dof: float
    sd: float = 1.0

    def __post_init__(self):
        if not self.dof > 2:
            raise ValueError(f"ScaledT needs dof > 2 for a finite sd, got {self.dof}")
        _check_positive(self.sd, "sd")

    @property
    def scale(self) -> float:
        return self.sd * math.sqrt((self.dof - 2.0) / self.dof)


@dataclass(frozen=True)
class TruncatedHybrid:
    """``inner`` restricted to [-cut, cut] mixed with ``outer`` restricted to |x| > cut."""

    inner: "DistSpec"
    outer: "DistSpec"
    cut: float
    weight_inner: float

    def __post_init__(self):
        _check_positive(self.cut, "cut")
        if not 0.0 <= self.weight_inner <= 1.0:
            raise ValueError(f"weight_inner must lie in [0, 1], got {self.weight_inner}")


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        _check_positive(self.shape, "shape")
        _check_positive(self.scale, "scale")


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"Uniform needs hi > lo, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class Gamma:
    shape: float
    rate: float

    def __post_init__(self):
        _check_positive(self.shape, "shape")
        _check_positive(self.rate, "rate")


DistSpec = Union[Normal, Laplace, ScaledT, TruncatedHybrid, InverseGamma, Uniform, Gamma]


def _check_positive(value, name):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and positive, got {value}")


def _unsupported(d, op):
    return TypeError(f"{op} is not supported for {type(d).__name__}")


def cdf(d: DistSpec, x):
    """Cumulative distribution function of a Normal, Laplace or ScaledT."""
    x = np.asarray(x, dtype=float)
    if isinstance(d, Normal):
        out = special.ndtr((x - d.mean) / d.sd)
    elif isinstance(d, Laplace):
        z = (x - d.location) / d.scale
        out = np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
    elif isinstance(d, ScaledT):
        out = special.stdtr(d.dof, x / d.scale)
    else:
        raise _unsupported(d, "cdf")
    return out[()] if out.ndim == 0 else out


def quantile(d: DistSpec, u):
    """Inverse CDF of a Normal, Laplace or ScaledT; ``u`` must lie in (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise ValueError("quantile requires 0 < u < 1")
    if isinstance(d, Normal):
        out = d.mean + d.sd * special.ndtri(u)
    elif isinstance(d, Laplace):
        # log1p keeps full precision in both tails
        out = np.where(
            u < 0.5,
            d.location + d.scale * np.log(2.0 * u),
            d.location - d.scale * np.log1p(-(2.0 * u - 1.0)),
        )
    elif isinstance(d, ScaledT):
        out = d.scale * special.stdtrit(d.dof, u)
    else:
        raise _unsupported(d, "quantile")
    return out[()] if out.ndim == 0 else out


def log_pdf(d: DistSpec, x):
    """Natural-log density; points outside the support give ``-inf``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(d, Normal):
            z = (x - d.mean) / d.sd
            out = -0.5 * z * z - math.log(d.sd) - _LOG_SQRT_2PI
        elif isinstance(d, Laplace):
            out = -np.abs(x - d.location) / d.scale - math.log(2.0 * d.scale)
        elif isinstance(d, ScaledT):
            nu, c = d.dof, d.scale
            const = (
                special.gammaln(0.5 * (nu + 1.0))
                - special.gammaln(0.5 * nu)
                - 0.5 * math.log(nu * math.pi)
                - math.log(c)
            )
            out = const - 0.5 * (nu + 1.0) * np.log1p((x / c) ** 2 / nu)
        elif isinstance(d, InverseGamma):
            a, b = d.shape, d.scale
            out = np.where(
                x > 0,
                a * math.log(b) - special.gammaln(a) - (a + 1.0) * np.log(x) - b / x,
                -np.inf,
            )
        elif isinstance(d, Gamma):
            a, r = d.shape, d.rate
            out = np.where(
                x > 0,
                a * math.log(r) - special.gammaln(a) + (a - 1.0) * np.log(x) - r * x,
                -np.inf,
            )
        elif isinstance(d, Uniform):
            out = np.where((x >= d.lo) & (x <= d.hi), -math.log(d.hi - d.lo), -np.inf)
        else:
            raise _unsupported(d, "log_pdf")
    return out[()] if out.ndim == 0 else out


def _log_mass_inside(d: DistSpec, cut: float) -> float:
    return float(np.log(cdf(d, cut) - cdf(d, -cut)))


def hybrid_log_pdf(d: TruncatedHybrid, x):
    """Log density of a :class:`TruncatedHybrid`, with each piece renormalised."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= d.cut
    log_in = _log_mass_inside(d.inner, d.cut)
    log_out = float(np.log1p(-(cdf(d.outer, d.cut) - cdf(d.outer, -d.cut))))
    with np.errstate(divide="ignore"):
        out = np.where(
            inside,
            math.log(d.weight_inner) + log_pdf(d.inner, x) - log_in if d.weight_inner > 0 else -np.inf,
            math.log1p(-d.weight_inner) + log_pdf(d.outer, x) - log_out if d.weight_inner < 1 else -np.inf,
        )
    return out[()] if out.ndim == 0 else out


def sample(d: DistSpec, rng: np.random.Generator, size=None):
    """Draw from ``d`` using ``rng``; identical generator states give identical draws."""
    if isinstance(d, Normal):
        return rng.normal(d.mean, d.sd, size)
    if isinstance(d, Laplace):
        return rng.laplace(d.location, d.scale, size)
    if isinstance(d, ScaledT):
        return d.scale * rng.standard_t(d.dof, size)
    if isinstance(d, Uniform):
        return rng.uniform(d.lo, d.hi, size)
    if isinstance(d, Gamma):
        return rng.gamma(d.shape, 1.0 / d.rate, size)
    if isinstance(d, InverseGamma):
        return d.scale / rng.gamma(d.shape, 1.0, size)
    if isinstance(d, TruncatedHybrid):
        return _sample_hybrid(d, rng, size)
    raise _unsupported(d, "sample")


def _sample_region(d: DistSpec, rng, n: int, keep) -> np.ndarray:
    """Rejection sampling of ``n`` draws from ``d`` restricted to ``keep(x)``."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        batch = np.atleast_1d(sample(d, rng, max(2 * (n - filled), 16)))
        batch = batch[keep(batch)]
        take = min(batch.size, n - filled)
        out[filled:filled + take] = batch[:take]
        filled += take
    return out


def _sample_hybrid(d: TruncatedHybrid, rng, size):
    n = 1 if size is None else int(np.prod(size))
    inner = rng.random(n) < d.weight_inner
    out = np.empty(n)
    n_in = int(inner.sum())
    out[inner] = _sample_region(d.inner, rng, n_in, lambda x: np.abs(x) <= d.cut)
    out[~inner] = _sample_region(d.outer, rng, n - n_in, lambda x: np.abs(x) > d.cut)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def sample_gamma_truncated(shape, rate, lower_bound, rng, size=None):
    """Draw from Gamma(shape, rate) conditioned on exceeding ``lower_bound``.

    Plain rejection is used while the retained region holds most of the
    mass; otherwise the draw is made by inverting the regularised upper
    incomplete gamma function on the retained region.
    """
    if not (np.isfinite(shape) and shape > 0 and np.isfinite(rate) and rate > 0):
        raise ValueError(f"shape and rate must be finite and positive, got ({shape}, {rate})")
    if lower_bound < 0:
        raise ValueError(f"lower_bound must be >= 0, got {lower_bound}")
    n = 1 if size is None else int(np.prod(size))
    tail = special.gammaincc(shape, rate * lower_bound) if lower_bound > 0 else 1.0
    if tail <= 0.0 or not np.isfinite(tail):
        raise ValueError(
            f"Gamma({shape}, rate={rate}) has numerically zero mass above lower bound {lower_bound}"
        )
    if tail > 0.5:
        out = _sample_region(Gamma(shape, rate), rng, n, lambda x: x > lower_bound)
    else:
        v = tail * (1.0 - rng.random(n))
        out = special.gammainccinv(shape, v) / rate
        # inversion can round onto the bound itself
        out = np.maximum(out, np.nextafter(lower_bound, np.inf))
    if size is None:
        return float(out[0])
    return out.reshape(size)


def sample_normal_truncated(mean, sd, lower, upper, rng):
    """Vectorised N(mean, sd^2) draws restricted to (lower, upper), one bound infinite.

    Works in log-CDF space so that regions far in the tail do not underflow.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), mean.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), mean.shape)
    if np.any(np.isfinite(lower) & np.isfinite(upper)):
        raise ValueError("only one-sided truncation is supported")
    # reduce to Z > a on the standard scale; an upper bound is handled by reflection
    flip = np.isfinite(upper)
    a = np.where(flip, -(upper - mean) / sd, (lower - mean) / sd)
    log_v = np.log1p(-rng.random(mean.shape))
    # P(Z > a) = ndtr(-a); draw the survival level uniformly in (0, ndtr(-a)]
    z = -special.ndtri_exp(log_v + special.log_ndtr(-a))
    z = np.maximum(z, a)
    return np.where(flip, mean - sd * z, mean + sd * z)


def truncated_normal_mean(mean, sd, lower=-np.inf, upper=np.inf):
    """Mean of N(mean, sd^2) restricted to (lower, upper), one bound infinite."""
    mean = np.asarray(mean, dtype=float)
    if np.isfinite(lower):
        a = (lower - mean) / sd
        # phi(a) / Phi(-a), computed on the log scale
        ratio = np.exp(-0.5 * a * a - _LOG_SQRT_2PI - special.log_ndtr(-a))
        return mean + sd * ratio
    b = (upper - mean) / sd
    ratio = np.exp(-0.5 * b * b - _LOG_SQRT_2PI - special.log_ndtr(b))
    return mean - sd * ratio
