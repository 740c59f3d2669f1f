"""Recursive Gaussian maximum likelihood for i.i.d. data.

Used as an independent cross-check of the general machinery at ``rho = 0``.
Coordinates here are ``(mu, sigma^2)``; :func:`to_scale_coords` and
:func:`to_variance_coords` convert to and from ``(mu, sigma)``.

Observations are indexed ``Z_0, ..., Z_n``, so after ``n`` updates the
state summarises ``n + 1`` values. The variance update uses the previous
mean,

    sigma2_n = n/(n+1) sigma2_{n-1} + n/(n+1)^2 (mu_{n-1} - Z_n)^2,

which reproduces the two-pass population variance exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance, InvalidConfig
from .numkit import chi2_quantile

VARIANCE_FLOOR = 1e-300


@dataclass(frozen=True)
class MleState:
    """Running MLE; ``mu_hat`` and ``sigma2_hat`` may be arrays of parallel streams."""

    n: int
    mu_hat: float
    sigma2_hat: float


def mle_init(z0: float) -> MleState:
    z0 = np.asarray(z0, dtype=float)
    return MleState(0, z0 if z0.ndim else float(z0), np.zeros_like(z0) if z0.ndim else 0.0)


def mle_step(state: MleState, z_new: float, *, printed_variant: bool = False) -> MleState:
    """Fold one observation into the running mean and population variance.

    ``printed_variant=True`` swaps ``mu_{n-1}`` for the freshly updated
    ``mu_n`` in the variance term. That form does not agree with the batch
    estimator and is kept only so tests can demonstrate the discrepancy.
    """
    n = state.n + 1
    mu = (n / (n + 1)) * state.mu_hat + z_new / (n + 1)
    ref = mu if printed_variant else state.mu_hat
    s2 = (n / (n + 1)) * state.sigma2_hat + (n / (n + 1) ** 2) * (ref - z_new) ** 2
    return MleState(n, mu, s2)


def mle_run(observations, **kwargs) -> MleState:
    it = iter(observations)
    try:
        state = mle_init(next(it))
    except StopIteration:
        raise InvalidConfig("need at least one observation") from None
    for z in it:
        state = mle_step(state, z, **kwargs)
    return state


def _checked(state: MleState) -> None:
    if state.n < 1:
        raise InvalidConfig("need at least two observations")
    if np.any(np.asarray(state.sigma2_hat) <= VARIANCE_FLOOR):
        raise DegenerateVariance("all observations are identical")


def mle_u_statistic(state: MleState, mu: float, sigma2: float) -> float:
    """``n/s2 (mu_hat - mu)^2 + n/(2 s2^2) (s2 - sigma2)^2`` with ``s2 = sigma2_hat``."""
    _checked(state)
    n, s2 = state.n, state.sigma2_hat
    return n / s2 * (state.mu_hat - mu) ** 2 + n / (2.0 * s2 * s2) * (s2 - sigma2) ** 2


def mle_extreme_points(state: MleState, alpha: float | None = None, *, kappa: float | None = None) -> np.ndarray:
    """The four axis endpoints of the MLE ellipse in ``(mu, sigma^2)``.

    Order: ``mu`` plus, ``mu`` minus, ``sigma^2`` plus, ``sigma^2`` minus.
    """
    _checked(state)
    if kappa is None:
        if alpha is None:
            raise InvalidConfig("give alpha or kappa")
        kappa = chi2_quantile(2, alpha)
    n, mu, s2 = state.n, state.mu_hat, state.sigma2_hat
    dm = math.sqrt(kappa / n) * math.sqrt(s2)
    ds = math.sqrt(2.0 * kappa / n)
    return np.array([[mu + dm, s2], [mu - dm, s2], [mu, (1.0 + ds) * s2], [mu, (1.0 - ds) * s2]])


def mle_region_contains(state: MleState, mu, sigma2, alpha: float):
    return mle_u_statistic(state, mu, sigma2) < chi2_quantile(2, alpha)


def to_scale_coords(point) -> np.ndarray:
    """``(mu, sigma^2) -> (mu, sigma)``."""
    p = np.asarray(point, dtype=float)
    return np.stack([p[..., 0], np.sqrt(p[..., 1])], axis=-1)


def to_variance_coords(point) -> np.ndarray:
    """``(mu, sigma) -> (mu, sigma^2)``."""
    p = np.asarray(point, dtype=float)
    return np.stack([p[..., 0], p[..., 1] ** 2], axis=-1)
