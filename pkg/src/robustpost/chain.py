"""Container for MCMC output shared by every sampler in the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["ChainOutput", "posterior_means"]


@dataclass
class ChainOutput:
    """Summary of one chain.

    Attributes
    ----------
    theta_mean : ndarray of shape (p,)
        Coordinate-wise mean of the retained theta draws.
    n_kept : int
        Number of retained (post burn-in) draws behind ``theta_mean``.
    draws : ndarray of shape (n_kept, p) or None
        Retained draws, when the sampler was asked to store them.
    rb_mean : ndarray of shape (p,) or None
        Rao-Blackwellised mean: the average over retained scans of
        E[theta | everything else], available for conditionally conjugate
        samplers.
    u_mean : ndarray of shape (p,) or None
        Mean of the error quantiles, for samplers that work in u.
    u_order_mean : ndarray of shape (p,) or None
        Mean of the sorted error quantiles u_[1] <= ... <= u_[p].
    acceptance : ndarray or None
        Metropolis-Hastings acceptance rate per adaptation block or scan.
    acceptance_rate : float or None
        Post burn-in acceptance rate.
    final_k : int or None
        Window size in use after burn-in.
    traces : dict
        Scalar traces such as hyperparameters, keyed by name.
    """

    theta_mean: np.ndarray
    n_kept: int
    draws: Optional[np.ndarray] = None
    rb_mean: Optional[np.ndarray] = None
    u_mean: Optional[np.ndarray] = None
    u_draws: Optional[np.ndarray] = None
    u_order_mean: Optional[np.ndarray] = None
    assignments: Optional[np.ndarray] = None
    acceptance: Optional[np.ndarray] = None
    acceptance_rate: Optional[float] = None
    final_k: Optional[int] = None
    traces: dict = field(default_factory=dict)

    @classmethod
    def from_draws(cls, draws) -> "ChainOutput":
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        n = draws.shape[0]
        mean = draws.mean(axis=0) if n else np.full(draws.shape[1], np.nan)
        return cls(theta_mean=mean, n_kept=n, draws=draws)


def posterior_means(out: ChainOutput, rao_blackwell: bool = True) -> np.ndarray:
    """Posterior mean estimate of theta.

    Uses the Rao-Blackwellised average when the sampler provides one and
    ``rao_blackwell`` is true, otherwise the plain mean of retained draws.
    """
    if out.n_kept < 1:
        raise ValueError("chain has no retained draws")
    if rao_blackwell and out.rb_mean is not None:
        return out.rb_mean
    return out.theta_mean
