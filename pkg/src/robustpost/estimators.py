"""scikit-learn style wrappers around the samplers.

The estimand is the vector of effects behind one vector of measurements,
so ``fit`` takes ``y`` of shape (p,) and there is no separate ``transform``
on new data; ``fit_transform`` returns the posterior means in the input
order.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state, column_or_1d
from sklearn.utils.validation import check_is_fitted

from . import distributions as dist
from .chain import posterior_means
from .dp_mixture import DpConfig, dp_fit
from .hier_gibbs import FAMILIES, GibbsConfig, robustified_gibbs, standard_gibbs
from .permutation_mh import MhConfig
from .quantile_map import ErrorModel, ParallelDataset, reorder_by_q

__all__ = ["ShrinkageEstimator", "DirichletProcessShrinkage"]


def _dataset(y, error_sd):
    y = column_or_1d(np.asarray(y, dtype=float), warn=True)
    if y.size < 2:
        raise ValueError(f"need at least two measurements, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains NaN or infinity")
    sd = np.broadcast_to(np.asarray(error_sd, dtype=float), y.shape)
    if not np.all(sd > 0):
        raise ValueError("error_sd must be positive")
    errors = ErrorModel([dist.Normal(0.0, float(s)) for s in sd])
    return reorder_by_q(ParallelDataset(y, errors=errors))


def _seed(random_state):
    return int(check_random_state(random_state).randint(np.iinfo(np.int32).max))


class ShrinkageEstimator(BaseEstimator):
    """Posterior-mean shrinkage of many noisy effects under a working prior.

    Parameters
    ----------
    prior : {"laplace", "normal", "mixture"}, default="mixture"
        Working prior family. The hyperparameters get uniform hyperpriors.
    robust : bool, default=True
        Use the robustified posterior, in which the sorted error quantiles
        are pinned to the uniform grid and the theta update is permutation
        Metropolis-Hastings.
    n_scans, burn_in : int
        Gibbs scans in total and discarded at the start.
    inner_mh_sweeps : int, default=1
        Permutation MH proposals per scan, in multiples of p (robust only).
    error_sd : float or array-like, default=1.0
        Standard deviation of the Normal measurement error.
    random_state : int, RandomState instance or None

    Attributes
    ----------
    theta_hat_ : ndarray of shape (p,)
        Posterior means in the order of the input.
    chain_ : ChainOutput
        Raw sampler output, in q-sorted order.
    order_ : ndarray of shape (p,)
        ``order_[k]`` is the input index at q-sorted position ``k``.
    acceptance_rate_ : float or None
        Post burn-in MH acceptance (robust only).
    """

    def __init__(self, prior="mixture", robust=True, n_scans=4000, burn_in=1000, inner_mh_sweeps=1,
                 error_sd=1.0, random_state=None):
        self.prior = prior
        self.robust = robust
        self.n_scans = n_scans
        self.burn_in = burn_in
        self.inner_mh_sweeps = inner_mh_sweeps
        self.error_sd = error_sd
        self.random_state = random_state

    def fit(self, y, X=None):
        if self.prior not in FAMILIES:
            raise ValueError(f"prior must be one of {FAMILIES}, got {self.prior!r}")
        ds = _dataset(y, self.error_sd)
        cfg = GibbsConfig(
            n_scans=self.n_scans,
            burn_in=self.burn_in,
            inner_mh_sweeps=self.inner_mh_sweeps,
            mh=MhConfig(n_steps=1, initial_k=2),
            seed=_seed(self.random_state),
        )
        run = robustified_gibbs if self.robust else standard_gibbs
        self.chain_ = run(ds, self.prior, cfg)
        self.order_ = ds.order
        self.theta_hat_ = ds.restore_order(posterior_means(self.chain_))
        self.acceptance_rate_ = self.chain_.acceptance_rate
        return self

    def fit_transform(self, y, X=None):
        return self.fit(y).theta_hat_

    def __sklearn_is_fitted__(self):
        return hasattr(self, "theta_hat_")

    @property
    def hyperparameter_trace_(self):
        check_is_fitted(self)
        return self.chain_.traces


class DirichletProcessShrinkage(BaseEstimator):
    """Posterior-mean shrinkage under a Dirichlet process mixture of normals.

    Parameters
    ----------
    alpha : float, default=1.0
        DP concentration.
    n_scans, burn_in : int
    error_sd : float or array-like, default=1.0
    random_state : int, RandomState instance or None

    Attributes
    ----------
    theta_hat_ : ndarray of shape (p,)
    chain_ : ChainOutput
    order_ : ndarray of shape (p,)
    """

    def __init__(self, alpha=1.0, n_scans=4000, burn_in=1000, error_sd=1.0, random_state=None):
        self.alpha = alpha
        self.n_scans = n_scans
        self.burn_in = burn_in
        self.error_sd = error_sd
        self.random_state = random_state

    def fit(self, y, X=None):
        ds = _dataset(y, self.error_sd)
        cfg = DpConfig(n_scans=self.n_scans, burn_in=self.burn_in, alpha=self.alpha,
                       seed=_seed(self.random_state))
        self.chain_ = dp_fit(ds, cfg)
        self.order_ = ds.order
        self.theta_hat_ = ds.restore_order(posterior_means(self.chain_))
        return self

    def fit_transform(self, y, X=None):
        return self.fit(y).theta_hat_

    def __sklearn_is_fitted__(self):
        return hasattr(self, "theta_hat_")
