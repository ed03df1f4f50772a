"""Gibbs samplers for the Laplace, Normal and vector-mixture working priors.

``standard_gibbs`` alternates exact draws of theta | eta, y with the
hyperparameter conditional. ``robustified_gibbs`` replaces the theta step
with permutation Metropolis-Hastings on the error-quantile grid and keeps
the hyperparameter step unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special

from .chain import ChainOutput, posterior_means
from .distributions import sample_gamma_truncated, sample_normal_truncated, truncated_normal_mean
from .permutation_mh import CoordinatePrior, MhConfig, PermutationSampler, WindowSchedule
from .quantile_map import ParallelDataset

__all__ = [
    "LAPLACE_SCALE_MAX",
    "NORMAL_SD_MAX",
    "WorkingPrior",
    "GibbsConfig",
    "initial_prior",
    "sample_theta_given_eta_standard",
    "conditional_mean_standard",
    "sample_eta_given_theta",
    "eta_conditional_draws",
    "standard_gibbs",
    "robustified_gibbs",
    "posterior_means",
]

LAPLACE_SCALE_MAX = 35.35
NORMAL_SD_MAX = 50.0
FAMILIES = ("laplace", "normal", "mixture")


@dataclass(frozen=True)
class WorkingPrior:
    """Hyperparameter state of a working prior.

    ``eta1`` is the Laplace scale, ``eta2`` the Normal sd. For the mixture
    family ``z`` names the component generating the whole theta vector and
    ``lam`` is the prior weight of the Laplace component. ``fixed`` freezes
    the hyperparameters (point-mass hyperprior), which turns the sampler
    into an exact conditionally-conjugate one.
    """

    family: str
    eta1: float = 1.0
    eta2: float = 1.0
    lam: float = 0.5
    z: str = "laplace"
    fixed: bool = False
    eta1_max: float = LAPLACE_SCALE_MAX
    eta2_max: float = NORMAL_SD_MAX

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.z not in ("laplace", "normal"):
            raise ValueError(f"z must be 'laplace' or 'normal', got {self.z!r}")
        if not 0 < self.eta1 < self.eta1_max or not 0 < self.eta2 < self.eta2_max:
            raise ValueError(f"eta out of range: eta1={self.eta1}, eta2={self.eta2}")
        if not 0 < self.lam < 1:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")

    @property
    def active(self) -> str:
        return self.z if self.family == "mixture" else self.family

    def coordinate_prior(self) -> CoordinatePrior:
        if self.active == "laplace":
            return CoordinatePrior("laplace", self.eta1)
        return CoordinatePrior("normal", self.eta2)


@dataclass
class GibbsConfig:
    n_scans: int = 4000
    burn_in: int = 1000
    inner_mh_sweeps: int = 1
    mh: MhConfig = None
    seed: Optional[int] = None
    store_draws: bool = False
    collapsed_indicator: bool = True
    track_u: bool = False

    def __post_init__(self):
        if self.n_scans < 1:
            raise ValueError("n_scans must be positive")
        if not 0 <= self.burn_in < self.n_scans:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_scans")
        if self.inner_mh_sweeps < 1:
            raise ValueError("inner_mh_sweeps must be positive")
        if self.mh is None:
            self.mh = MhConfig(n_steps=1, initial_k=2)


def initial_prior(family: str, y, fixed: Optional[dict] = None) -> WorkingPrior:
    """Moment-based starting hyperparameters for a dataset with unit errors."""
    y = np.asarray(y, dtype=float)
    spread = max(float(np.mean(y * y)) - 1.0, 0.25)
    eta2 = min(math.sqrt(spread), 0.99 * NORMAL_SD_MAX)
    eta1 = min(math.sqrt(spread / 2.0), 0.99 * LAPLACE_SCALE_MAX)
    prior = WorkingPrior(family, eta1=eta1, eta2=eta2)
    if family == "mixture" and np.any(y != 0):
        z = _z_log_odds_collapsed(prior, y) > 0
        prior = replace(prior, z="laplace" if z else "normal")
    if fixed:
        prior = replace(prior, fixed=True, **fixed)
    return prior


def _error_sd(ds: ParallelDataset):
    if not ds.errors.is_normal:
        raise ValueError("the standard samplers need Normal errors")
    return ds.y - ds.errors.location, ds.errors.scale


def _laplace_lobes(y, s, eta1):
    """Means and log weights of the two truncated-normal lobes of exp(-(y-t)^2/2s^2 - |t|/eta1)."""
    s2 = s * s
    m_pos = y - s2 / eta1
    m_neg = y + s2 / eta1
    lw_pos = (m_pos * m_pos - y * y) / (2 * s2) + special.log_ndtr(m_pos / s)
    lw_neg = (m_neg * m_neg - y * y) / (2 * s2) + special.log_ndtr(-m_neg / s)
    p_pos = special.expit(lw_pos - lw_neg)
    return m_pos, m_neg, p_pos


def sample_theta_given_eta_standard(ds: ParallelDataset, prior: WorkingPrior, rng) -> np.ndarray:
    """Exact independent draws of theta_i | y_i, eta for Normal errors."""
    y, s = _error_sd(ds)
    if prior.active == "normal":
        v = prior.eta2 ** 2
        shrink = v / (v + s * s)
        return y * shrink + np.sqrt(shrink) * s * rng.standard_normal(y.size)
    m_pos, m_neg, p_pos = _laplace_lobes(y, s, prior.eta1)
    pos = rng.random(y.size) < p_pos
    out = np.empty(y.size)
    if pos.any():
        out[pos] = sample_normal_truncated(m_pos[pos], s[pos], 0.0, np.inf, rng)
    neg = ~pos
    if neg.any():
        out[neg] = sample_normal_truncated(m_neg[neg], s[neg], -np.inf, 0.0, rng)
    return out


def conditional_mean_standard(ds: ParallelDataset, prior: WorkingPrior) -> np.ndarray:
    """E[theta_i | y_i, eta] for Normal errors."""
    y, s = _error_sd(ds)
    if prior.active == "normal":
        v = prior.eta2 ** 2
        return y * v / (v + s * s)
    m_pos, m_neg, p_pos = _laplace_lobes(y, s, prior.eta1)
    e_pos = truncated_normal_mean(m_pos, s, lower=0.0)
    e_neg = truncated_normal_mean(m_neg, s, upper=0.0)
    return p_pos * e_pos + (1.0 - p_pos) * e_neg


def _laplace_loglik(theta, eta1):
    return -theta.size * math.log(2 * eta1) - np.abs(theta).sum() / eta1


def _normal_loglik(theta, eta2):
    return -theta.size * (math.log(eta2) + 0.5 * math.log(2 * math.pi)) - 0.5 * np.dot(theta, theta) / eta2 ** 2


def _z_log_odds(prior: WorkingPrior, theta) -> float:
    return (
        math.log(prior.lam) + _laplace_loglik(theta, prior.eta1)
        - math.log1p(-prior.lam) - _normal_loglik(theta, prior.eta2)
    )


def _log_marginal_laplace(theta, eta_max):
    """log of the Laplace likelihood integrated over eta1 ~ Uniform(0, eta_max)."""
    p = theta.size
    total = float(np.abs(theta).sum())
    a = p - 1.0
    tail = special.gammaincc(a, total / eta_max)
    return (-p * math.log(2.0) - math.log(eta_max) + special.gammaln(a) - a * math.log(total)
            + math.log(max(tail, 1e-300)))


def _log_marginal_normal(theta, eta_max):
    """log of the Normal likelihood integrated over eta2 ~ Uniform(0, eta_max)."""
    p = theta.size
    half = 0.5 * float(np.dot(theta, theta))
    a = 0.5 * (p - 1.0)
    tail = special.gammaincc(a, half / eta_max ** 2)
    return (-0.5 * p * math.log(2.0 * math.pi) - math.log(2.0 * eta_max) + special.gammaln(a)
            - a * math.log(half) + math.log(max(tail, 1e-300)))


def _z_log_odds_collapsed(prior: WorkingPrior, theta) -> float:
    if not np.any(theta):
        raise ValueError("theta is identically zero; the mixture indicator conditional is improper")
    return (
        math.log(prior.lam) + _log_marginal_laplace(theta, prior.eta1_max)
        - math.log1p(-prior.lam) - _log_marginal_normal(theta, prior.eta2_max)
    )


def _draw_eta1(theta, rng, eta_max, size=None):
    total = float(np.abs(theta).sum())
    if total <= 0:
        raise ValueError("sum |theta_i| is zero; the Laplace scale conditional is improper")
    x = sample_gamma_truncated(theta.size - 1.0, total, 1.0 / eta_max, rng, size)
    return 1.0 / x


def _draw_eta2(theta, rng, eta_max, size=None):
    total = float(np.dot(theta, theta))
    if total <= 0:
        raise ValueError("sum theta_i^2 is zero; the Normal sd conditional is improper")
    w = sample_gamma_truncated((theta.size - 1.0) / 2.0, total / 2.0, 1.0 / eta_max ** 2, rng, size)
    return w ** -0.5


def eta_conditional_draws(family: str, theta, rng, size: int, eta_max: Optional[float] = None) -> np.ndarray:
    """``size`` independent draws of the Laplace scale or Normal sd given theta."""
    theta = np.asarray(theta, dtype=float)
    if theta.size < 2:
        raise ValueError("need at least two coordinates")
    if family == "laplace":
        return _draw_eta1(theta, rng, eta_max or LAPLACE_SCALE_MAX, size)
    if family == "normal":
        return _draw_eta2(theta, rng, eta_max or NORMAL_SD_MAX, size)
    raise ValueError(f"family must be 'laplace' or 'normal', got {family!r}")


def sample_eta_given_theta(prior: WorkingPrior, theta, rng, collapsed: bool = True) -> WorkingPrior:
    """Draw the hyperparameters from their full conditional given theta.

    Under a Uniform(0, eta_max) hyperprior, 1/eta1 given theta is
    Gamma(p - 1, sum|theta|) and 1/eta2^2 is Gamma((p - 1)/2, sum theta^2 / 2),
    each truncated below by the image of eta_max. For the mixture, z is drawn
    from its Bernoulli conditional, then lam from Beta, then the active
    component's eta from its conditional; the inactive eta has no likelihood
    contribution and is redrawn from its uniform hyperprior.

    With ``collapsed`` (the default) z is drawn with both etas integrated
    over their hyperpriors, so (z, eta1, eta2) is updated as one exact block.
    This has the same stationary distribution as conditioning on the
    current etas but does not get stuck: conditioning on an inactive eta
    freshly drawn from a wide uniform almost never lets z switch.
    """
    if prior.fixed:
        return prior
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if theta.size < 2:
        raise ValueError("hyperparameter updates need at least two coordinates; fix them with fixed=...")
    if prior.family == "laplace":
        return replace(prior, eta1=_draw_eta1(theta, rng, prior.eta1_max))
    if prior.family == "normal":
        return replace(prior, eta2=_draw_eta2(theta, rng, prior.eta2_max))

    log_odds = _z_log_odds_collapsed(prior, theta) if collapsed else _z_log_odds(prior, theta)
    p_laplace = special.expit(log_odds)
    z = "laplace" if rng.random() < p_laplace else "normal"
    is_lap = z == "laplace"
    lam = rng.beta(1.0 + is_lap, 1.0 + (not is_lap))
    lam = min(max(lam, 1e-300), 1.0 - 1e-16)
    if is_lap:
        eta1 = _draw_eta1(theta, rng, prior.eta1_max)
        eta2 = prior.eta2_max * (1.0 - rng.random())
    else:
        eta2 = _draw_eta2(theta, rng, prior.eta2_max)
        eta1 = prior.eta1_max * (1.0 - rng.random())
    # keep the open-interval invariant under floating-point edge cases
    eta1 = min(eta1, np.nextafter(prior.eta1_max, 0))
    eta2 = min(eta2, np.nextafter(prior.eta2_max, 0))
    return replace(prior, z=z, lam=lam, eta1=eta1, eta2=eta2)


class _Traces:
    def __init__(self, family):
        self.names = {"laplace": ["eta1"], "normal": ["eta2"], "mixture": ["eta1", "eta2", "lam", "z"]}[family]
        self.rows = {n: [] for n in self.names}

    def add(self, prior: WorkingPrior):
        for n in self.names:
            v = getattr(prior, n)
            self.rows[n].append(1.0 if v == "laplace" else 0.0 if v == "normal" else v)

    def arrays(self):
        return {n: np.asarray(v) for n, v in self.rows.items()}


def _require_sorted(ds):
    q = ds.q_values
    if not np.all(q[1:] >= q[:-1]):
        raise ValueError("dataset must be reordered by q-value first")


def standard_gibbs(ds: ParallelDataset, family, cfg: GibbsConfig, fixed: Optional[dict] = None) -> ChainOutput:
    """Standard hierarchical posterior via exact two-block Gibbs.

    ``family`` is a family name or a starting :class:`WorkingPrior`.
    ``fixed`` pins hyperparameters, e.g. ``{"eta2": 2.0}``.
    The output carries both the plain draw mean and the Rao-Blackwellised
    mean of E[theta | eta, y] over retained scans.
    """
    _require_sorted(ds)
    rng = np.random.default_rng(cfg.seed)
    prior = family if isinstance(family, WorkingPrior) else initial_prior(family, ds.y, fixed)
    p = ds.p
    n_kept = cfg.n_scans - cfg.burn_in
    sum_theta = np.zeros(p)
    sum_cond = np.zeros(p)
    draws = np.empty((n_kept, p)) if cfg.store_draws else None
    sum_u = np.zeros(p) if cfg.track_u else None
    sum_u_order = np.zeros(p) if cfg.track_u else None
    traces = _Traces(prior.family)
    for scan in range(cfg.n_scans):
        theta = sample_theta_given_eta_standard(ds, prior, rng)
        if scan >= cfg.burn_in:
            sum_cond += conditional_mean_standard(ds, prior)
            sum_theta += theta
            if cfg.track_u:
                u = ds.errors.cdf(ds.y - theta)
                sum_u += u
                sum_u_order += np.sort(u)
            if draws is not None:
                draws[scan - cfg.burn_in] = theta
        prior = sample_eta_given_theta(prior, theta, rng, cfg.collapsed_indicator)
        traces.add(prior)
    return ChainOutput(
        theta_mean=sum_theta / n_kept,
        n_kept=n_kept,
        draws=draws,
        rb_mean=sum_cond / n_kept,
        u_mean=None if sum_u is None else sum_u / n_kept,
        u_order_mean=None if sum_u_order is None else sum_u_order / n_kept,
        traces=traces.arrays(),
    )


def robustified_gibbs(ds: ParallelDataset, family, cfg: GibbsConfig, fixed: Optional[dict] = None) -> ChainOutput:
    """Robustified Gibbs sampler.

    Each scan runs ``inner_mh_sweeps * p`` permutation MH proposals under the
    current component's coordinate prior, starting from the previous scan's
    assignment, then draws the hyperparameters given theta(u).

    Window sizes adapt during burn-in only, and stop ``mh.freeze_tail`` of
    the way before its end so the frozen kernel is exercised before draws
    are kept. Each prior component has its own
    window schedule; for the mixture, every burn-in scan also runs a short
    tuning sweep for the inactive component on a copy of the state (at an
    eta drawn from that component's conditional), so whichever component is
    active after burn-in runs a tuned kernel. The copy never feeds back into
    the chain.
    """
    _require_sorted(ds)
    rng = np.random.default_rng(cfg.seed)
    prior = family if isinstance(family, WorkingPrior) else initial_prior(family, ds.y, fixed)
    p = ds.p
    mh = cfg.mh
    sampler = PermutationSampler(ds, prior.coordinate_prior())
    components = ("laplace", "normal") if prior.family == "mixture" else (prior.family,)
    schedules = {c: WindowSchedule(p, mh.initial_k, zoned=mh.zoned) for c in components}
    shadow = PermutationSampler(ds, prior.coordinate_prior()) if len(components) > 1 and not prior.fixed else None
    steps = cfg.inner_mh_sweeps * p
    n_kept = cfg.n_scans - cfg.burn_in
    sum_theta = np.zeros(p)
    sum_u = np.zeros(p)
    draws = np.empty((n_kept, p)) if cfg.store_draws else None
    rates = np.empty(cfg.n_scans)
    post_acc = 0
    traces = _Traces(prior.family)
    adapt_until = mh.adapt_until(cfg.burn_in)
    for scan in range(cfg.n_scans):
        schedule = schedules[prior.active]
        sampler.set_prior(prior.coordinate_prior())
        acc, _ = sampler.run(steps, schedule, rng)
        rates[scan] = acc / steps
        theta = sampler.theta()
        if scan < adapt_until:
            schedule.adapt(mh.target_acceptance, mh.band)
            if shadow is not None and p > 1:
                other = "normal" if prior.active == "laplace" else "laplace"
                eta = float(eta_conditional_draws(other, theta, rng, 1)[0])
                shadow.set_prior(CoordinatePrior(other, eta))
                shadow.set_assignment(sampler.state.assignment)
                shadow.run(max(steps // 4, 1), schedules[other], rng)
                schedules[other].adapt(mh.target_acceptance, mh.band)
            if scan == adapt_until - 1:
                for sch in schedules.values():
                    sch.reset_counts()
        if scan >= cfg.burn_in:
            post_acc += acc
            sum_theta += theta
            sum_u += sampler.state.u()
            if draws is not None:
                draws[scan - cfg.burn_in] = theta
        if scan % 500 == 499:
            sampler.check_consistency()
        prior = sample_eta_given_theta(prior, theta, rng, cfg.collapsed_indicator)
        traces.add(prior)
    tr = traces.arrays()
    for c, sch in schedules.items():
        tr[f"window_sizes_{c}"] = sch.k.copy()
    return ChainOutput(
        theta_mean=sum_theta / n_kept,
        n_kept=n_kept,
        draws=draws,
        u_mean=sum_u / n_kept,
        acceptance=rates,
        acceptance_rate=post_acc / (n_kept * steps),
        final_k=schedules[prior.active].central,
        traces=tr,
    )
