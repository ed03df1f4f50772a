"""Error-quantile change of variables and q-value reordering.

For a location-family error ``y_i = theta_i + eps_i`` with error CDF ``F_i``
the error quantile is ``u_i = F_i(y_i - theta_i)`` and the inverse map is
``theta_i = y_i - F_i^{-1}(u_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import distributions as dist

__all__ = ["ErrorModel", "ParallelDataset", "u_from_theta", "theta_from_u", "q_values", "reorder_by_q", "grid_deviation"]

U_EPS = 1e-14


def _location_scale(d):
    """Split a location-family spec into (family key, standard spec, location, scale)."""
    if isinstance(d, dist.Normal):
        return ("normal",), dist.Normal(0.0, 1.0), d.mean, d.sd
    if isinstance(d, dist.Laplace):
        return ("laplace",), dist.Laplace(0.0, 1.0), d.location, d.scale
    if isinstance(d, dist.ScaledT):
        unit = dist.ScaledT(d.dof, np.sqrt(d.dof / (d.dof - 2.0)))
        return ("t", d.dof), unit, 0.0, d.scale
    raise TypeError(f"error distributions must be Normal, Laplace or ScaledT, got {type(d).__name__}")


class ErrorModel:
    """Per-coordinate error distributions, all continuous location families.

    Parameters
    ----------
    dists : DistSpec or sequence of DistSpec
        A single spec shared by every coordinate, or one spec per coordinate.
    p : int, optional
        Number of coordinates when ``dists`` is a single shared spec.
    """

    def __init__(self, dists: Union[dist.DistSpec, Sequence[dist.DistSpec]], p: Optional[int] = None):
        if isinstance(dists, (list, tuple)):
            self.dists = tuple(dists)
            if p is not None and p != len(self.dists):
                raise ValueError(f"got {len(self.dists)} error specs for p={p}")
        else:
            if p is None:
                raise ValueError("p is required with a single shared error spec")
            self.dists = (dists,) * int(p)
        parts = [_location_scale(d) for d in self.dists]
        keys = sorted({k for k, *_ in parts}, key=repr)
        self._keys = keys
        self._units = {k: u for k, u, _, _ in parts}
        self.family_index = np.array([keys.index(k) for k, *_ in parts], dtype=np.int64)
        self.location = np.array([loc for *_, loc, _ in parts], dtype=float)
        self.scale = np.array([s for *_, s in parts], dtype=float)

    @classmethod
    def standard_normal(cls, p: int) -> "ErrorModel":
        return cls(dist.Normal(0.0, 1.0), p)

    @property
    def p(self) -> int:
        return len(self.dists)

    @property
    def is_normal(self) -> bool:
        return self._keys == [("normal",)]

    def take(self, index) -> "ErrorModel":
        return ErrorModel([self.dists[i] for i in np.asarray(index)])

    def _unit_apply(self, fn, z):
        out = np.empty_like(z)
        for f, key in enumerate(self._keys):
            mask = self.family_index == f
            out[mask] = fn(self._units[key], z[mask])
        return out

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._unit_apply(dist.cdf, (x - self.location) / self.scale)

    def quantile(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.location + self.scale * self._unit_apply(dist.quantile, u)

    def unit_quantile_table(self, p_grid: int) -> np.ndarray:
        """Standard quantiles of each family at the grid ``j / (p_grid + 1)``, j = 1..p_grid.

        Row ``f`` belongs to family ``f`` of :attr:`family_index`; column ``j - 1``
        to grid point ``j``.
        """
        grid = np.arange(1, p_grid + 1) / (p_grid + 1.0)
        return np.vstack([dist.quantile(self._units[k], grid) for k in self._keys])

    def __eq__(self, other):
        return isinstance(other, ErrorModel) and self.dists == other.dists

    def __repr__(self):
        kinds = sorted({repr(d) for d in self.dists})
        if len(kinds) == 1:
            return f"ErrorModel({kinds[0]}, p={self.p})"
        return f"ErrorModel(<{len(kinds)} distinct specs>, p={self.p})"


@dataclass
class ParallelDataset:
    """Observations ``y`` with their error model.

    ``order[k]`` is the original index of the coordinate now stored at
    position ``k``; a freshly built dataset has the identity order.
    """

    y: np.ndarray
    errors: ErrorModel = None
    q_values: np.ndarray = None
    order: np.ndarray = None
    true_theta: Optional[np.ndarray] = None
    reordered: bool = field(default=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y must be finite")
        p = self.y.size
        if p == 0:
            raise ValueError("y must contain at least one observation")
        if self.errors is None:
            self.errors = ErrorModel.standard_normal(p)
        if self.errors.p != p:
            raise ValueError(f"error model has p={self.errors.p} but y has {p} entries")
        if self.q_values is None:
            self.q_values = self.errors.cdf(self.y)
        if self.order is None:
            self.order = np.arange(p)
        if self.true_theta is not None:
            self.true_theta = np.asarray(self.true_theta, dtype=float).ravel()
            if self.true_theta.size != p:
                raise ValueError("true_theta must have the same length as y")

    @property
    def p(self) -> int:
        return self.y.size

    @property
    def ordering_permutation(self) -> np.ndarray:
        """Maps an original index to its current position."""
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos

    def restore_order(self, values) -> np.ndarray:
        """Put a per-coordinate vector computed on this dataset back in original order."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[self.order] = values
        return out


def u_from_theta(ds: ParallelDataset, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != ds.y.shape:
        raise ValueError(f"theta has shape {theta.shape}, expected {ds.y.shape}")
    return ds.errors.cdf(ds.y - theta)


def theta_from_u(ds: ParallelDataset, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != ds.y.shape:
        raise ValueError(f"u has shape {u.shape}, expected {ds.y.shape}")
    if np.any(~((u > 0) & (u < 1))):
        raise ValueError("error quantiles must lie strictly inside (0, 1)")
    u = np.clip(u, U_EPS, 1.0 - U_EPS)
    return ds.y - ds.errors.quantile(u)


def q_values(ds: ParallelDataset) -> np.ndarray:
    """Left-tail p-values F_i(y_i) of theta_i = 0."""
    return ds.errors.cdf(ds.y)


def reorder_by_q(ds: ParallelDataset) -> ParallelDataset:
    """Sort coordinates by ascending q-value (stable), carrying ``true_theta`` along."""
    q = q_values(ds)
    idx = np.argsort(q, kind="stable")
    return replace(
        ds,
        y=ds.y[idx],
        errors=ds.errors.take(idx),
        q_values=q[idx],
        order=ds.order[idx],
        true_theta=None if ds.true_theta is None else ds.true_theta[idx],
        reordered=True,
    )


def grid_deviation(u_sorted) -> float:
    """sup_i |u_[i] - i/(p+1)| for ascending quantiles ``u_sorted``."""
    u = np.asarray(u_sorted, dtype=float)
    grid = np.arange(1, u.size + 1) / (u.size + 1.0)
    return float(np.max(np.abs(u - grid)))
