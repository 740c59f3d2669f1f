"""Recursive confidence ellipsoids around the refined estimator.

The region after ``n`` transitions is

    T_n = {theta in box : n (theta_hat_n - theta)^T I(theta_tilde_n) (theta_hat_n - theta) < kappa}

with ``kappa`` the upper-``alpha`` point of chi-squared with ``d`` degrees of
freedom. Writing ``I(theta_tilde_n) = L L^T``, the ellipsoid is pinned down
by its ``2d`` axis endpoints ``theta_hat_n -/+ sqrt(kappa/n) (L^T)^{-1} e_j``.
Because the estimator state is updated from the previous state and the new
observation alone, so is the region (:func:`region_step`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import InvalidConfig
from .estimator import EstimatorConfig, EstimatorState, current_theta_hat, init_state, qale_step, quadratic_stat
from .model import MarkovModel, ParameterBox
from .numkit import cholesky, chi2_quantile, matmul, solve_upper, spd_inverse, sym_eigmax

# Relative guard band below kappa. The extreme points are computed, not exact,
# so their U value lands within a few ulps of kappa on either side; the guard
# keeps them classified as boundary (outside) points.
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class ConfidenceRegion:
    """Immutable snapshot of the ellipsoid after ``n`` transitions."""

    n: int
    alpha: float
    kappa: float
    center: np.ndarray
    chol: np.ndarray
    extreme_points: np.ndarray
    box: ParameterBox | None = None

    @property
    def dim(self) -> int:
        return self.center.shape[-1]

    def u_statistic(self, theta):
        return quadratic_stat(self.n, self.center, self.chol, theta)

    def contains(self, theta):
        return contains(self, theta)

    def diameter(self):
        return diameter(self)

    @property
    def exits_box(self):
        """True when some extreme point lies outside the parameter box."""
        if self.box is None:
            return False
        inside = self.box.contains(self.extreme_points)
        out = ~np.all(inside, axis=-1)
        return bool(out) if np.ndim(out) == 0 else out

    def to_dict(self, theta_star=None) -> dict:
        """JSON-ready representation of a single (unbatched) snapshot."""
        if self.center.ndim != 1:
            raise ValueError("to_dict serialises one snapshot at a time")
        d = self.dim
        out = {
            "n": int(self.n),
            "alpha": float(self.alpha),
            "kappa": float(self.kappa),
            "center": [float(v) for v in self.center],
            "L": [[float(self.chol[i, j]) for j in range(i + 1)] for i in range(d)],
            "extreme_points": [[float(v) for v in p] for p in self.extreme_points],
            "diameter": float(self.diameter()),
            "exits_box": bool(self.exits_box),
        }
        if theta_star is not None:
            out["contains_true"] = bool(self.contains(theta_star))
        return out

    def to_json(self, theta_star=None) -> str:
        return json.dumps(self.to_dict(theta_star))


def extreme_points(center, L, kappa: float, n: int, scale: Literal["sqrt", "linear"] = "sqrt") -> np.ndarray:
    """Axis endpoints ``center -/+ r (L^T)^{-1} e_j`` for ``j = 1..d``.

    The radius is ``r = sqrt(kappa / n)``. ``scale="linear"`` uses
    ``kappa / n`` instead; that variant does not put the points on the
    boundary and exists only so the tests can show it.

    Returns an array of shape ``(..., 2d, d)`` ordered minus/plus per axis.
    """
    center = np.asarray(center, dtype=float)
    L = np.asarray(L, dtype=float)
    d = center.shape[-1]
    radius = math.sqrt(kappa / n) if scale == "sqrt" else kappa / n
    Lt = np.swapaxes(L, -1, -2)
    eye = np.broadcast_to(np.eye(d), Lt.shape)
    axes = solve_upper(Lt, eye)  # column j is (L^T)^{-1} e_j
    disp = radius * np.swapaxes(axes, -1, -2)  # row j
    pts = np.empty(center.shape[:-1] + (2 * d, d))
    pts[..., 0::2, :] = center[..., None, :] - disp
    pts[..., 1::2, :] = center[..., None, :] + disp
    return pts


def build_region(state: EstimatorState, model: MarkovModel, alpha: float, kappa: float | None = None) -> ConfidenceRegion:
    """Confidence region from an estimator state after at least one transition."""
    if state.n < 1:
        raise InvalidConfig("the region needs at least one transition")
    if kappa is None:
        kappa = chi2_quantile(model.dim, alpha)
    center = current_theta_hat(state, model)
    L = cholesky(model.fisher_information(state.theta_tilde))
    pts = extreme_points(center, L, kappa, state.n)
    return ConfidenceRegion(state.n, float(alpha), float(kappa), center, L, pts, model.box)


def contains(region: ConfidenceRegion, theta):
    """Strict membership ``U_n(theta) < kappa`` intersected with the parameter box.

    Points within ``BOUNDARY_RTOL * kappa`` of the boundary count as outside.
    """
    inside = np.asarray(region.u_statistic(theta)) < region.kappa * (1.0 - BOUNDARY_RTOL)
    if region.box is not None:
        inside = inside & np.asarray(region.box.contains(theta))
    return bool(inside) if inside.ndim == 0 else inside


def diameter(region: ConfidenceRegion):
    """Longest axis of the ellipsoid, ``2 sqrt(kappa/n) * sigma_max((L^T)^{-1})``.

    ``sigma_max((L^T)^{-1})^2`` is the top eigenvalue of ``(L L^T)^{-1}``.
    """
    shape_inv = spd_inverse(matmul(region.chol, np.swapaxes(region.chol, -1, -2)))
    lam = sym_eigmax(shape_inv)
    out = 2.0 * np.sqrt(region.kappa / region.n * lam)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RegionStream:
    """Estimator state paired with the region it induces."""

    estimator: EstimatorState
    alpha: float
    kappa: float
    region: ConfidenceRegion | None = None


def start_stream(model: MarkovModel, config: EstimatorConfig, alpha: float) -> RegionStream:
    return RegionStream(init_state(model, config), float(alpha), chi2_quantile(model.dim, alpha))


def region_step(stream: RegionStream, model: MarkovModel, config: EstimatorConfig, z_new) -> RegionStream:
    """Advance by one observation: estimator update, then region rebuild.

    Uses nothing but the previous stream value and ``z_new``.
    """
    est = qale_step(stream.estimator, model, config, z_new)
    region = build_region(est, model, stream.alpha, stream.kappa) if est.n >= 1 else None
    return replace(stream, estimator=est, region=region)
