"""Metropolis-Hastings on the space of grid permutations.

The target is the standard posterior in error-quantile coordinates,
restricted to vectors ``u`` whose entries are a permutation of the grid
``1/(p+1), ..., p/(p+1)``. For location-family errors its log density is,
up to a constant, ``sum_i log pi(y_i - F_i^{-1}(u_i))``.

Proposals pick ``k`` consecutive positions (no wrap-around) in q-sorted
order and shuffle the grid values found there uniformly at random. The
acceptance ratio only involves the touched positions, so one step costs
O(k) regardless of p. By default the window size depends on how close
the window sits to either end of the q-order (see :class:`WindowSchedule`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

from ._rng import next_double, seed_state, shuffle
from .chain import ChainOutput
from .quantile_map import ParallelDataset

__all__ = [
    "CoordinatePrior",
    "ThetaGrid",
    "PermutationState",
    "MhConfig",
    "PermutationSampler",
    "log_target",
    "propose_window_shuffle",
    "mh_step",
    "adapt_k",
    "WindowSchedule",
    "run_chain",
]

_LAPLACE, _NORMAL = 0, 1


@dataclass(frozen=True)
class CoordinatePrior:
    """Zero-centred Laplace (scale) or Normal (sd) density applied to each theta_i."""

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("laplace", "normal"):
            raise ValueError(f"kind must be 'laplace' or 'normal', got {self.kind!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be finite and positive, got {self.scale}")

    @property
    def code(self) -> int:
        return _LAPLACE if self.kind == "laplace" else _NORMAL

    @property
    def const(self) -> float:
        if self.kind == "laplace":
            return -math.log(2.0 * self.scale)
        return -math.log(self.scale) - 0.5 * math.log(2.0 * math.pi)

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "laplace":
            return self.const - np.abs(theta) / self.scale
        return self.const - 0.5 * (theta / self.scale) ** 2


PriorLike = Union[CoordinatePrior, Callable[[np.ndarray], np.ndarray]]


class ThetaGrid:
    """theta_i(j) = y_i - F_i^{-1}((j + 1) / (p + 1)) for 0-based grid index j.

    Coordinates sharing an error family share one table of standard
    quantiles, so memory is O(p * n_families) rather than O(p^2).
    """

    def __init__(self, ds: ParallelDataset):
        errs = ds.errors
        self.p = ds.p
        self.yshift = ds.y - errs.location
        self.scale = errs.scale.copy()
        self.family = errs.family_index.copy()
        self.table = errs.unit_quantile_table(ds.p)

    def theta(self, assignment) -> np.ndarray:
        a = np.asarray(assignment)
        return self.yshift - self.scale * self.table[self.family, a]

    def u(self, assignment) -> np.ndarray:
        return (np.asarray(assignment) + 1.0) / (self.p + 1.0)


@dataclass
class PermutationState:
    """Coordinate ``i`` holds grid value ``(assignment[i] + 1) / (p + 1)``."""

    grid: ThetaGrid
    assignment: np.ndarray
    log_terms: np.ndarray
    log_target: float

    @classmethod
    def identity(cls, grid: ThetaGrid, prior: PriorLike) -> "PermutationState":
        a = np.arange(grid.p, dtype=np.int64)
        terms = _log_terms(grid, a, prior)
        return cls(grid, a, terms, float(terms.sum()))

    @property
    def p(self) -> int:
        return self.assignment.size

    def theta(self) -> np.ndarray:
        return self.grid.theta(self.assignment)

    def u(self) -> np.ndarray:
        return self.grid.u(self.assignment)


@dataclass
class MhConfig:
    n_steps: int
    burn_in: int = 0
    initial_k: int = 2
    target_acceptance: float = 0.25
    # dead band of the window controller; narrower than the acceptable
    # [0.15, 0.35] range so post burn-in drift in eta stays inside it
    band: float = 0.05
    adapt_every: Optional[int] = None
    seed: Optional[int] = None
    thin: int = 0
    zoned: bool = True
    # last fraction of burn-in run on the frozen kernel, so the final window
    # sizes are exercised before any draw is kept
    freeze_tail: float = 0.2

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_steps")
        if self.initial_k < 2:
            raise ValueError("initial_k must be at least 2")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if not 0 <= self.freeze_tail < 1:
            raise ValueError("freeze_tail must lie in [0, 1)")

    def adapt_until(self, burn_in: int) -> int:
        """Number of burn-in units (steps or scans) during which adaptation runs."""
        return burn_in - int(self.freeze_tail * burn_in)


def _log_terms(grid: ThetaGrid, assignment, prior: PriorLike) -> np.ndarray:
    theta = grid.theta(assignment)
    if isinstance(prior, CoordinatePrior):
        return prior.logpdf(theta)
    return np.asarray(prior(theta), dtype=float)


def log_target(state: PermutationState, prior: PriorLike) -> float:
    """Full recomputation of sum_i log pi(theta_i) at the current assignment."""
    terms = _log_terms(state.grid, state.assignment, prior)
    if np.any(np.isnan(terms)):
        raise ValueError("prior log density returned NaN")
    total = float(terms.sum())
    if np.all(np.isneginf(terms)):
        raise ValueError("prior density is zero at every coordinate of this state")
    return total


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _log_prior(kind, inv_scale, const, theta):
    if kind == 0:
        return const - abs(theta) * inv_scale
    z = theta * inv_scale
    return const - 0.5 * z * z


@njit(cache=True)
def _log_prior_all(kind, inv_scale, const, theta, out):
    for i in range(theta.size):
        out[i] = _log_prior(kind, inv_scale, const, theta[i])


@njit(cache=True)
def _mh_block(assign, cur_theta, log_terms, yshift, scale, offset, flat_table, kind, inv_scale,
              const, wstart, wlen, zone, zone_n, zone_acc, n, rs, accumulate, clock, last,
              acc_theta, acc_u, thin, trace):
    p = assign.size
    inv = 1.0 / (p + 1.0)
    n_anchor = wlen.size
    kmax = wlen.max()
    cand = np.empty(kmax, np.int64)
    new_terms = np.empty(kmax)
    new_theta = np.empty(kmax)
    n_acc = 0
    delta_sum = 0.0
    n_rec = 0
    for s in range(n):
        a = int(next_double(rs) * n_anchor)
        st = wstart[a]
        k = wlen[a]
        zone_n[zone[a]] += 1
        for m in range(k):
            cand[m] = assign[st + m]
        shuffle(cand, k, rs)
        for m in range(k):
            i = st + m
            new_theta[m] = yshift[i] - scale[i] * flat_table[offset[i] + cand[m]]
        # kind is hoisted out of the loops so each one vectorises
        if kind == 0:
            for m in range(k):
                new_terms[m] = const - abs(new_theta[m]) * inv_scale
        else:
            for m in range(k):
                z = new_theta[m] * inv_scale
                new_terms[m] = const - 0.5 * z * z
        delta = 0.0
        for m in range(k):
            delta += new_terms[m] - log_terms[st + m]
        if delta != delta:
            return n_acc, delta_sum, clock, n_rec, -1
        if delta >= 0.0 or np.log(1.0 - next_double(rs)) < delta:
            n_acc += 1
            zone_acc[zone[a]] += 1
            delta_sum += delta
            for m in range(k):
                i = st + m
                if accumulate:
                    # close the run of draws during which coordinate i held its old value
                    held = clock - last[i]
                    acc_theta[i] += held * cur_theta[i]
                    acc_u[i] += held * (assign[i] + 1.0) * inv
                    last[i] = clock
                assign[i] = cand[m]
                cur_theta[i] = new_theta[m]
                log_terms[i] = new_terms[m]
        if accumulate:
            clock += 1
        if thin > 0 and (s + 1) % thin == 0 and n_rec < trace.shape[0]:
            for i in range(p):
                trace[n_rec, i] = assign[i]
            n_rec += 1
    return n_acc, delta_sum, clock, n_rec, 0


# ---------------------------------------------------------------- sampler


_MIN_FACTOR = 1.05


def _zone_edges(p: int, first: int = 8) -> np.ndarray:
    """Zone boundaries over the distance to the nearer end, doubling in width."""
    half = (p + 1) // 2
    edges = [0]
    w = first
    while w < half / 2:
        edges.append(w)
        w *= 2
    edges.append(half)
    return np.array(edges, dtype=np.int64)


class WindowSchedule:
    """Which positions a window-shuffle proposal touches.

    With ``zoned=False`` every window has the same size k and its start is
    uniform on ``0..p-k``.

    With ``zoned=True`` an anchor position is drawn uniformly from
    ``0..p-1`` and the window runs from the anchor toward the middle of the
    q-order. Its size comes from the anchor's zone, keyed on the distance
    to the nearer end; zones are narrow near the ends and wide in the
    middle, and both ends share a zone. Extreme coordinates sit in very
    different parts of the target than the bulk, so a single k tuned for the
    bulk would leave them nearly frozen. Each zone keeps its own acceptance
    counters and adapts its k independently.

    In both modes the window is a function of the drawn anchor alone, so
    the proposal is symmetric.
    """

    def __init__(self, p: int, initial_k: int = 2, zoned: bool = True, min_count: int = 50):
        self.p = p
        self.zoned = zoned and p >= 32
        self.min_count = min_count
        k0 = int(min(max(initial_k, 2), max(p, 2)))
        if self.zoned:
            self.edges = _zone_edges(p)
            anchor = np.arange(p)
            self._dist = np.minimum(anchor, p - 1 - anchor)
            self.zone = np.searchsorted(self.edges, self._dist, side="right") - 1
            self._left = anchor <= p - 1 - anchor
        else:
            self.edges = np.array([0, p], dtype=np.int64)
        n_zones = self.edges.size - 1
        self.k = np.full(n_zones, k0, dtype=np.int64)
        self.n = np.zeros(n_zones, dtype=np.int64)
        self.acc = np.zeros(n_zones, dtype=np.int64)
        # per-zone step ratio; its log halves whenever the adjustment direction reverses
        self.factor = np.full(n_zones, 1.25)
        self._last_dir = np.zeros(n_zones, dtype=np.int64)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Window start, window length and zone id for every anchor."""
        p = self.p
        if not self.zoned:
            k = int(min(self.k[0], p))
            n = p - k + 1
            return np.arange(n, dtype=np.int64), np.full(n, k, dtype=np.int64), np.zeros(n, dtype=np.int64)
        anchor = np.arange(p)
        k = np.minimum(self.k[self.zone], p - self._dist)
        start = np.where(self._left, anchor, anchor - k + 1)
        return start.astype(np.int64), k.astype(np.int64), self.zone.astype(np.int64)

    def reset_counts(self):
        self.n[:] = 0
        self.acc[:] = 0

    def adapt(self, target: float = 0.25, band: float = 0.10):
        """Apply :func:`adapt_k` to every zone with enough proposals since its last update.

        A zone's first moves use the 25% step. Each time its direction
        reverses the step ratio is square-rooted, down to 5%, so k settles instead of
        oscillating across the band when one 25% step moves acceptance
        further than the band is wide.
        """
        ready = self.n >= self.min_count
        for z in np.flatnonzero(ready):
            rate = float(self.acc[z] / self.n[z])
            direction = int(rate > target + band) - int(rate < target - band)
            if direction == 0:
                continue
            if direction == -self._last_dir[z]:
                self.factor[z] = max(math.sqrt(self.factor[z]), _MIN_FACTOR)
            self._last_dir[z] = direction
            # a window anchored at distance d from an end has at most p - d positions
            cap = self.p - int(self.edges[z])
            self.k[z] = min(adapt_k(rate, int(self.k[z]), self.p, target, band, float(self.factor[z])), cap)
        self.n[ready] = 0
        self.acc[ready] = 0

    @property
    def central(self) -> int:
        """Window size used for anchors in the middle of the q-order."""
        return int(self.k[-1])


class PermutationSampler:
    """Stateful permutation MH sampler for one q-sorted dataset.

    The chain starts at the identity assignment, which pairs the smallest
    grid value with the smallest q-value. The prior can be swapped between
    calls to :meth:`run`, which is how the robustified Gibbs sampler
    conditions on fresh hyperparameters.
    """

    def __init__(self, ds: ParallelDataset, prior: CoordinatePrior):
        if not _is_sorted(ds):
            raise ValueError("dataset must be reordered by q-value before permutation sampling")
        self.grid = ThetaGrid(ds)
        p = ds.p
        self._offset = self.grid.family * p
        self._flat = np.ascontiguousarray(self.grid.table).ravel()
        a = np.arange(p, dtype=np.int64)
        self.state = PermutationState(self.grid, a, np.empty(p), 0.0)
        self._theta = self.grid.theta(a)
        self.set_prior(prior)
        self._clock = 0
        self._last = np.zeros(p, dtype=np.int64)
        self._acc_theta = np.zeros(p)
        self._acc_u = np.zeros(p)
        self._empty_trace = np.zeros((0, p), dtype=np.int64)

    @property
    def p(self) -> int:
        return self.grid.p

    def theta(self) -> np.ndarray:
        return self._theta.copy()

    def set_prior(self, prior: CoordinatePrior):
        self.prior = prior
        terms = np.empty(self.p)
        _log_prior_all(prior.code, 1.0 / prior.scale, prior.const, self._theta, terms)
        self.state.log_terms = terms
        self.state.log_target = float(terms.sum())

    def set_assignment(self, assignment):
        """Jump to ``assignment`` (a permutation of 0..p-1) under the current prior."""
        a = np.asarray(assignment, dtype=np.int64)
        if a.shape != (self.p,) or not np.array_equal(np.sort(a), np.arange(self.p)):
            raise ValueError("assignment must be a permutation of 0..p-1")
        self.state.assignment = a.copy()
        self._theta = self.grid.theta(self.state.assignment)
        self.set_prior(self.prior)

    def check_consistency(self, tol: float = 1e-6) -> float:
        """Compare the incrementally maintained log target with a full recomputation."""
        full = log_target(self.state, self.prior)
        drift = abs(full - self.state.log_target)
        if drift > tol * max(1.0, abs(full)):
            raise RuntimeError(f"incremental log target drifted by {drift:g}")
        self.state.log_target = float(self.state.log_terms.sum())
        return drift

    def run(self, n_steps: int, k, rng: np.random.Generator, accumulate: bool = False,
            thin: int = 0) -> tuple[int, Optional[np.ndarray]]:
        """Advance ``n_steps`` proposals.

        ``k`` is a fixed window size or a :class:`WindowSchedule`, whose
        zone counters are updated. Returns the number of accepted proposals
        and, when ``thin > 0``, the assignment recorded after every
        ``thin``-th step.
        """
        p = self.p
        if p == 1 or n_steps == 0:
            if accumulate:
                self._clock += n_steps
            rec = None
            if thin > 0:
                rec = np.repeat(self.state.assignment[None, :], n_steps // thin, axis=0)
            return n_steps, rec
        if isinstance(k, WindowSchedule):
            schedule = k
        else:
            schedule = WindowSchedule(p, int(k), zoned=False)
        wstart, wlen, zone = schedule.arrays()
        trace = np.zeros((n_steps // thin, p), dtype=np.int64) if thin > 0 else self._empty_trace
        st = self.state
        pr = self.prior
        n_acc, delta_sum, self._clock, n_rec, status = _mh_block(
            st.assignment, self._theta, st.log_terms, self.grid.yshift, self.grid.scale,
            self._offset, self._flat, pr.code, 1.0 / pr.scale, pr.const, wstart, wlen, zone,
            schedule.n, schedule.acc, n_steps, seed_state(rng), accumulate, self._clock, self._last, self._acc_theta, self._acc_u,
            thin, trace,
        )
        if status != 0:
            raise FloatingPointError("NaN in log acceptance ratio; the prior evaluator is broken")
        st.log_target += delta_sum
        return int(n_acc), (trace[:n_rec] if thin > 0 else None)

    def reset_means(self):
        self._clock = 0
        self._last[:] = 0
        self._acc_theta[:] = 0.0
        self._acc_u[:] = 0.0

    def means(self) -> tuple[np.ndarray, np.ndarray, int]:
        """Time-averaged theta and u over every accumulated step."""
        n = self._clock
        if n == 0:
            raise ValueError("no accumulated steps")
        a = self.state.assignment
        held = n - self._last
        theta = (self._acc_theta + held * self._theta) / n
        u = (self._acc_u + held * self.grid.u(a)) / n
        return theta, u, n


def _is_sorted(ds: ParallelDataset) -> bool:
    q = ds.q_values
    return bool(np.all(q[1:] >= q[:-1]))


def propose_window_shuffle(state: PermutationState, k: int, rng: np.random.Generator):
    """Shuffle ``k`` consecutive entries; returns (candidate assignment, touched positions)."""
    p = state.p
    if not 2 <= k <= p:
        raise ValueError(f"window size must satisfy 2 <= k <= p, got k={k}, p={p}")
    start = int(rng.integers(0, p - k + 1))
    cand = state.assignment.copy()
    cand[start:start + k] = cand[start:start + k][rng.permutation(k)]
    return cand, np.arange(start, start + k)


def mh_step(state: PermutationState, k: int, rng: np.random.Generator,
            prior: CoordinatePrior) -> tuple[PermutationState, bool]:
    """One Metropolis-Hastings step; the acceptance ratio touches only the window."""
    cand, touched = propose_window_shuffle(state, k, rng)
    theta_new = state.grid.yshift[touched] - state.grid.scale[touched] * state.grid.table[
        state.grid.family[touched], cand[touched]]
    new_terms = prior.logpdf(theta_new)
    delta = float(np.sum(new_terms - state.log_terms[touched]))
    if math.isnan(delta):
        raise FloatingPointError("NaN in log acceptance ratio; the prior evaluator is broken")
    accept = delta >= 0 or math.log(rng.random()) < delta
    if accept:
        state.assignment = cand
        state.log_terms = state.log_terms.copy()
        state.log_terms[touched] = new_terms
        state.log_target += delta
    return state, accept


def adapt_k(acceptance: float, k: int, p: int, target: float = 0.25, band: float = 0.10,
            factor: float = 1.25) -> int:
    """Multiplicative window-size controller keeping acceptance near ``target``.

    Above the band the window grows by ``factor`` (25% by default), below it
    shrinks by the same ratio (20%); the result is rounded half-up and kept
    within [2, p].
    """
    if acceptance > target + band:
        k = max(2, math.floor(k * factor + 0.5))
    elif acceptance < target - band:
        k = max(2, math.floor(k / factor + 0.5))
    return int(min(k, max(p, 2)))


def run_chain(ds: ParallelDataset, prior: CoordinatePrior, cfg: MhConfig,
              check_every: int = 10_000) -> ChainOutput:
    """Sample the restricted posterior for a fixed coordinate prior.

    Window sizes adapt during the first part of burn-in only
    (``cfg.freeze_tail`` sets the frozen remainder); retained draws come
    from a fixed kernel. Means average over every post burn-in step.
    """
    sampler = PermutationSampler(ds, prior)
    rng = np.random.default_rng(cfg.seed)
    p = ds.p
    schedule = WindowSchedule(p, cfg.initial_k, zoned=cfg.zoned)
    every = cfg.adapt_every or max(p, 100)
    rates = []

    stop = cfg.adapt_until(cfg.burn_in)
    done = 0
    while done < cfg.burn_in:
        n = min(every, (stop if done < stop else cfg.burn_in) - done)
        acc, _ = sampler.run(n, schedule, rng)
        rates.append(acc / n)
        if done < stop:
            schedule.adapt(cfg.target_acceptance, cfg.band)
        done += n
    schedule.reset_counts()

    n_post = cfg.n_steps - cfg.burn_in
    chunk = check_every
    if cfg.thin > 0:
        chunk = max(cfg.thin, chunk - chunk % cfg.thin)
    total_acc = 0
    traces = []
    done = 0
    while done < n_post:
        n = min(chunk, n_post - done)
        acc, rec = sampler.run(n, schedule, rng, accumulate=True, thin=cfg.thin)
        total_acc += acc
        rates.append(acc / n)
        if rec is not None:
            traces.append(rec)
        sampler.check_consistency()
        done += n

    theta_mean, u_mean, n_kept = sampler.means()
    out = ChainOutput(
        theta_mean=theta_mean,
        n_kept=n_kept,
        u_mean=u_mean,
        acceptance=np.array(rates),
        acceptance_rate=total_acc / n_post,
        final_k=schedule.central,
        traces={"window_sizes": schedule.k.copy()},
    )
    if cfg.thin > 0:
        a = np.concatenate(traces) if traces else np.zeros((0, p), dtype=np.int64)
        out.assignments = a
        out.draws = sampler.grid.theta(a)
        out.u_draws = sampler.grid.u(a)
    return out
