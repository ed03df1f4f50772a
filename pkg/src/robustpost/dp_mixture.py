"""Dirichlet process mixture of normals as a nonparametric working prior.

Model, for Normal errors with sd ``s_i``::

    y_i | theta_i        ~ N(theta_i, s_i^2)
    theta_i | mu, c      ~ N(mu_{c(i)}, sigma2)
    c                    ~ CRP(alpha),  mu_c ~ N(0, base_var)
    sigma2 ~ InvGamma(3, 5),  base_var ~ InvGamma(5, 20)

Cluster labels are resampled with theta and mu integrated out, using
``y_i | mu_c ~ N(mu_c, sigma2 + s_i^2)``. Then (mu, theta) are drawn as one
conjugate block and the two variances from their inverse-gamma
conditionals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from ._rng import next_double, seed_state
from .chain import ChainOutput
from .quantile_map import ParallelDataset

__all__ = [
    "DpConfig",
    "DpState",
    "initial_state",
    "update_assignments",
    "update_cluster_means_and_theta",
    "update_variances",
    "compact_labels",
    "dp_fit",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DpConfig:
    """Settings for :func:`dp_fit`.

    ``sigma2`` or ``base_var`` given as numbers are held fixed instead of
    sampled; ``base_var=np.inf`` gives a flat prior on the cluster means
    (no new clusters can then open). ``alpha=0`` pins the number of
    clusters at its starting value.
    """

    n_scans: int = 4000
    burn_in: int = 1000
    alpha: float = 1.0
    sigma2_prior: tuple = (3.0, 5.0)
    base_prior: tuple = (5.0, 20.0)
    sigma2: Optional[float] = None
    base_var: Optional[float] = None
    init_clusters: int = 1
    seed: Optional[int] = None
    store_draws: bool = False

    def __post_init__(self):
        if self.n_scans < 1 or not 0 <= self.burn_in < self.n_scans:
            raise ValueError("need n_scans >= 1 and 0 <= burn_in < n_scans")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        for name in ("sigma2_prior", "base_prior"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ValueError(f"{name} needs positive shape and scale, got {(a, b)}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.base_var is not None and not self.base_var > 0:
            raise ValueError("base_var must be positive")
        if self.init_clusters < 1:
            raise ValueError("init_clusters must be at least 1")


@dataclass
class DpState:
    """Sampler state. Labels are 0..K-1 after :func:`compact_labels`."""

    labels: np.ndarray
    means: np.ndarray
    theta: np.ndarray
    sigma2: float
    base_var: float
    alpha: float = 1.0
    noise_var: np.ndarray = field(default=None)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def _noise(ds: ParallelDataset):
    if not ds.errors.is_normal:
        raise ValueError("the DP mixture sampler needs Normal errors")
    return ds.y - ds.errors.location, ds.errors.scale ** 2


def initial_state(ds: ParallelDataset, cfg: DpConfig) -> DpState:
    """Quantile-based initial clusters, variances at their prior means (or fixed values)."""
    y, nv = _noise(ds)
    p = y.size
    k = min(cfg.init_clusters, p)
    ranks = np.argsort(np.argsort(y, kind="stable"), kind="stable")
    labels = (ranks * k // p).astype(np.int64)
    means = np.array([y[labels == c].mean() for c in range(k)])
    a, b = cfg.sigma2_prior
    sigma2 = cfg.sigma2 if cfg.sigma2 is not None else (b / (a - 1.0) if a > 1 else b)
    a, b = cfg.base_prior
    base_var = cfg.base_var if cfg.base_var is not None else (b / (a - 1.0) if a > 1 else b)
    return DpState(labels, means, y.copy(), float(sigma2), float(base_var), cfg.alpha, nv)


@njit(cache=True)
def _crp_sweep(labels, y, noise_var, sigma2, base_var, alpha, rs):
    """One collapsed Gibbs sweep over all cluster labels, in place.

    Clusters live in slots; ``prec[c]`` and ``wsum[c]`` hold the sums of
    1/(sigma2 + s_i^2) and y_i/(sigma2 + s_i^2) over members, from which the
    posterior predictive of each cluster follows.
    """
    p = y.size
    cap = p + 1
    count = np.zeros(cap, np.int64)
    prec = np.zeros(cap)
    wsum = np.zeros(cap)
    for i in range(p):
        c = labels[i]
        t = 1.0 / (sigma2 + noise_var[i])
        count[c] += 1
        prec[c] += t
        wsum[c] += y[i] * t
    # active slots in a dense list; pos[c] is slot c's index in it
    active = np.empty(cap, np.int64)
    pos = np.full(cap, -1, np.int64)
    n_act = 0
    free = np.empty(cap, np.int64)
    n_free = 0
    for c in range(cap - 1, -1, -1):
        if count[c] == 0:
            free[n_free] = c
            n_free += 1
        else:
            active[n_act] = c
            pos[c] = n_act
            n_act += 1
    logw = np.empty(cap)
    inv_base = 0.0 if math.isinf(base_var) else 1.0 / base_var
    log_alpha = math.log(alpha) if alpha > 0 else -np.inf
    for i in range(p):
        tau2 = sigma2 + noise_var[i]
        t = 1.0 / tau2
        c = labels[i]
        count[c] -= 1
        prec[c] -= t
        wsum[c] -= y[i] * t
        if count[c] == 0:
            prec[c] = 0.0
            wsum[c] = 0.0
            free[n_free] = c
            n_free += 1
            last = active[n_act - 1]
            active[pos[c]] = last
            pos[last] = pos[c]
            pos[c] = -1
            n_act -= 1
        top = -np.inf
        for j in range(n_act):
            d = active[j]
            post_prec = inv_base + prec[d]
            mean = wsum[d] / post_prec
            var = tau2 + 1.0 / post_prec
            r = y[i] - mean
            lw = math.log(count[d]) - 0.5 * (_LOG_2PI + math.log(var) + r * r / var)
            logw[j] = lw
            if lw > top:
                top = lw
        m = n_act
        if alpha > 0 and not math.isinf(base_var):
            var = tau2 + base_var
            lw = log_alpha - 0.5 * (_LOG_2PI + math.log(var) + y[i] * y[i] / var)
            logw[m] = lw
            if lw > top:
                top = lw
            m += 1
        total = 0.0
        for j in range(m):
            logw[j] = math.exp(logw[j] - top)
            total += logw[j]
        u = next_double(rs) * total
        pick = m - 1
        acc = 0.0
        for j in range(m):
            acc += logw[j]
            if u < acc:
                pick = j
                break
        if pick < n_act:
            d = active[pick]
        else:
            n_free -= 1
            d = free[n_free]
            active[n_act] = d
            pos[d] = n_act
            n_act += 1
        labels[i] = d
        count[d] += 1
        prec[d] += t
        wsum[d] += y[i] * t


def compact_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters to 0..K-1 in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def update_assignments(state: DpState, y, rng: np.random.Generator) -> DpState:
    """One collapsed sweep over the cluster labels; returns compacted labels."""
    y = np.asarray(y, dtype=float)
    labels = state.labels.astype(np.int64).copy()
    nv = state.noise_var if state.noise_var is not None else np.ones(y.size)
    _crp_sweep(labels, y, nv, state.sigma2, state.base_var, state.alpha, seed_state(rng))
    state.labels = compact_labels(labels)
    return state


def cluster_mean_posterior(state: DpState, y):
    """Mean and variance of each mu_c given members' y, with theta integrated out."""
    y = np.asarray(y, dtype=float)
    nv = state.noise_var if state.noise_var is not None else np.ones(y.size)
    t = 1.0 / (state.sigma2 + nv)
    k = state.n_clusters
    prec = np.bincount(state.labels, weights=t, minlength=k)
    if not math.isinf(state.base_var):
        prec = prec + 1.0 / state.base_var
    wsum = np.bincount(state.labels, weights=y * t, minlength=k)
    return wsum / prec, 1.0 / prec


def theta_conditional(state: DpState, y):
    """Mean and variance of theta_i given y_i, its cluster mean and sigma2."""
    nv = state.noise_var if state.noise_var is not None else np.ones(len(y))
    mu = state.means[state.labels]
    s2 = state.sigma2
    mean = (np.asarray(y) * s2 + mu * nv) / (s2 + nv)
    var = s2 * nv / (s2 + nv)
    return mean, var


def update_cluster_means_and_theta(state: DpState, y, rng: np.random.Generator) -> DpState:
    """Draw every mu_c, then every theta_i given its cluster mean."""
    m, v = cluster_mean_posterior(state, y)
    state.means = m + np.sqrt(v) * rng.standard_normal(m.size)
    mean, var = theta_conditional(state, y)
    state.theta = mean + np.sqrt(var) * rng.standard_normal(mean.size)
    return state


def _inv_gamma(shape, scale, rng):
    return scale / rng.gamma(shape)


def update_variances(state: DpState, rng: np.random.Generator, cfg: Optional[DpConfig] = None) -> DpState:
    """Inverse-gamma draws of sigma2 and base_var, skipping any held fixed by ``cfg``."""
    cfg = cfg or DpConfig()
    if cfg.sigma2 is None:
        a, b = cfg.sigma2_prior
        r = state.theta - state.means[state.labels]
        state.sigma2 = _inv_gamma(a + 0.5 * r.size, b + 0.5 * float(r @ r), rng)
    if cfg.base_var is None:
        a, b = cfg.base_prior
        mu = state.means
        state.base_var = _inv_gamma(a + 0.5 * mu.size, b + 0.5 * float(mu @ mu), rng)
    return state


def dp_fit(ds: ParallelDataset, cfg: Optional[DpConfig] = None) -> ChainOutput:
    """Run the DP mixture sampler and return posterior-mean estimates.

    ``rb_mean`` averages E[theta_i | y_i, mu, sigma2] over retained scans;
    traces hold sigma2, base_var and the number of clusters per scan.
    """
    cfg = cfg or DpConfig()
    rng = np.random.default_rng(cfg.seed)
    y, _ = _noise(ds)
    state = initial_state(ds, cfg)
    p = y.size
    n_kept = cfg.n_scans - cfg.burn_in
    sum_theta = np.zeros(p)
    sum_cond = np.zeros(p)
    draws = np.empty((n_kept, p)) if cfg.store_draws else None
    tr = {"sigma2": np.empty(cfg.n_scans), "base_var": np.empty(cfg.n_scans), "n_clusters": np.empty(cfg.n_scans)}
    for scan in range(cfg.n_scans):
        update_assignments(state, y, rng)
        update_cluster_means_and_theta(state, y, rng)
        if scan >= cfg.burn_in:
            sum_theta += state.theta
            sum_cond += theta_conditional(state, y)[0]
            if draws is not None:
                draws[scan - cfg.burn_in] = state.theta
        update_variances(state, rng, cfg)
        tr["sigma2"][scan] = state.sigma2
        tr["base_var"][scan] = state.base_var
        tr["n_clusters"][scan] = state.n_clusters
    return ChainOutput(
        theta_mean=sum_theta / n_kept,
        n_kept=n_kept,
        draws=draws,
        rb_mean=sum_cond / n_kept,
        traces=tr,
    )
