"""Built-in numerical self-checks run by ``robustpost verify``.

Each check compares a sampler with an independent exact answer: full
enumeration of the permutation space for small p, conjugate closed forms,
and quadrature of unnormalised conditionals. They are small enough to run
in about a minute.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .dp_mixture import DpState, theta_conditional
from .hier_gibbs import GibbsConfig, eta_conditional_draws, standard_gibbs
from .permutation_mh import CoordinatePrior, PermutationSampler, ThetaGrid, WindowSchedule, adapt_k
from .quantile_map import ParallelDataset, grid_deviation, reorder_by_q
from .simulation import generate_dataset

__all__ = ["CheckResult", "enumerate_robust_posterior", "mh_permutation_frequencies", "run_checks"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def __post_init__(self):
        self.passed = bool(self.passed)


def _encode(assign: np.ndarray, p: int) -> np.ndarray:
    return assign @ (p ** np.arange(p))


def enumerate_robust_posterior(ds: ParallelDataset, prior: CoordinatePrior):
    """Exact restricted posterior over all p! assignments.

    Returns (codes, probabilities) with codes as from :func:`_encode`.
    """
    p = ds.p
    grid = ThetaGrid(ds)
    perms = np.array(list(itertools.permutations(range(p))), dtype=np.int64)
    logp = np.array([prior.logpdf(grid.theta(a)).sum() for a in perms])
    w = np.exp(logp - logp.max())
    return _encode(perms, p), w / w.sum()


def mh_permutation_frequencies(ds: ParallelDataset, prior: CoordinatePrior, n_steps: int, seed=0,
                               burn_in: int = 20_000, chunk: int = 200_000):
    """Visit frequencies of the permutation sampler over ``n_steps`` post burn-in steps."""
    p = ds.p
    rng = np.random.default_rng(seed)
    sampler = PermutationSampler(ds, prior)
    k = 2
    done = 0
    while done < burn_in:
        acc, _ = sampler.run(1000, k, rng)
        k = adapt_k(acc / 1000, k, p)
        done += 1000
    counts = {}
    done = 0
    while done < n_steps:
        n = min(chunk, n_steps - done)
        _, rec = sampler.run(n, k, rng, thin=1)
        codes, c = np.unique(_encode(rec, p), return_counts=True)
        for a, b in zip(codes, c):
            counts[a] = counts.get(a, 0) + int(b)
        done += n
    return counts, k


def total_variation(codes, probs, counts) -> float:
    n = sum(counts.values())
    emp = np.array([counts.get(c, 0) / n for c in codes])
    extra = 1.0 - emp.sum()
    return 0.5 * (np.abs(emp - probs).sum() + extra)


def _small_dataset(p, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 2.0, p)
    return reorder_by_q(ParallelDataset(y))


def check_enumeration(n_steps=400_000) -> list[CheckResult]:
    out = []
    for p in (3, 4, 5):
        for prior in (CoordinatePrior("laplace", 1.5), CoordinatePrior("normal", 2.0)):
            t0 = time.perf_counter()
            ds = _small_dataset(p, p)
            codes, probs = enumerate_robust_posterior(ds, prior)
            counts, _ = mh_permutation_frequencies(ds, prior, n_steps, seed=p)
            tv = total_variation(codes, probs, counts)
            out.append(CheckResult(f"enumeration p={p} {prior.kind}", tv < 0.03, f"TV={tv:.4f}",
                                   time.perf_counter() - t0))
    return out


def check_conjugate() -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    y = rng.normal(0.0, math.sqrt(5.0), 1000)
    ds = reorder_by_q(ParallelDataset(y))
    res = standard_gibbs(ds, "normal", GibbsConfig(n_scans=2000, burn_in=200, seed=1), fixed={"eta2": 2.0})
    # draw means: each is N(0.8 y, 0.8 / n)
    z = (res.theta_mean - 0.8 * ds.y) / math.sqrt(0.8 / res.n_kept)
    rb = np.max(np.abs(res.rb_mean - 0.8 * ds.y))
    ok = rb < 1e-10 and np.max(np.abs(z)) < 5.0 and abs(np.mean(z * z) - 1.0) < 0.2
    return CheckResult("normal-normal conjugate", bool(ok),
                       f"max|z|={np.max(np.abs(z)):.2f} mean z^2={np.mean(z*z):.3f}", time.perf_counter() - t0)


def check_quantile_convergence(n_data=5) -> CheckResult:
    t0 = time.perf_counter()
    med = {}
    for p in (200, 2000):
        dev = []
        for r in range(n_data):
            ds = generate_dataset("normal", p, r)
            res = standard_gibbs(ds, "normal", GibbsConfig(n_scans=600, burn_in=100, seed=r, track_u=True),
                                 fixed={"eta2": 2.0})
            dev.append(grid_deviation(res.u_order_mean))
        med[p] = float(np.median(dev))
    return CheckResult("sorted-quantile convergence", med[2000] < med[200],
                       f"median sup dev p=200: {med[200]:.4f}, p=2000: {med[2000]:.4f}", time.perf_counter() - t0)


def check_hyper_conditionals(n_draws=40_000) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng(3)
    theta = rng.normal(0.0, 2.0, 10)
    for family, eta_max, logf in (
        ("laplace", 35.35, lambda e: -10 * np.log(e) - np.abs(theta).sum() / e),
        ("normal", 50.0, lambda e: -10 * np.log(e) - 0.5 * np.dot(theta, theta) / e ** 2),
    ):
        t0 = time.perf_counter()
        mode = np.abs(theta).sum() / 10 if family == "laplace" else math.sqrt(np.dot(theta, theta) / 10)
        lf0 = logf(mode)
        dens = lambda e: math.exp(logf(e) - lf0)
        pts = [mode / 4, mode, mode * 4]
        z = integrate.quad(dens, 0, eta_max, points=pts, limit=200)[0]
        m1 = integrate.quad(lambda e: e * dens(e), 0, eta_max, points=pts, limit=200)[0] / z
        m2 = integrate.quad(lambda e: e * e * dens(e), 0, eta_max, points=pts, limit=200)[0] / z
        var = m2 - m1 * m1
        key = "eta1" if family == "laplace" else "eta2"
        draws = eta_conditional_draws(family, theta, rng, n_draws)
        em, ev = draws.mean(), draws.var()
        ok = abs(em / m1 - 1) < 0.01 and abs(ev / var - 1) < 0.05
        out.append(CheckResult(f"{key} conditional vs quadrature", bool(ok),
                               f"mean {em:.4f}/{m1:.4f} var {ev:.4f}/{var:.4f}", time.perf_counter() - t0))
    return out


def check_dp_theta_conditional() -> CheckResult:
    t0 = time.perf_counter()
    y, mu, s2 = 2.0, 0.0, 0.5
    st = DpState(np.zeros(1, np.int64), np.array([mu]), np.zeros(1), s2, 1.0)
    mean, var = theta_conditional(st, np.array([y]))
    f = lambda t: math.exp(-0.5 * (y - t) ** 2 - 0.5 * (t - mu) ** 2 / s2)
    z = integrate.quad(f, -20, 20)[0]
    qm = integrate.quad(lambda t: t * f(t), -20, 20)[0] / z
    qv = integrate.quad(lambda t: (t - qm) ** 2 * f(t), -20, 20)[0] / z
    err = max(abs(qm - mean[0]), abs(qv - var[0]))
    return CheckResult("DP theta conditional vs quadrature", err < 1e-8, f"max abs err {err:.1e}",
                       time.perf_counter() - t0)


def run_checks(quick: bool = False) -> list[CheckResult]:
    results = check_enumeration(200_000 if quick else 400_000)
    results.append(check_conjugate())
    results.append(check_quantile_convergence(3 if quick else 5))
    results += check_hyper_conditionals(20_000 if quick else 40_000)
    results.append(check_dp_theta_conditional())
    return results
