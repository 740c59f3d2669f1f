"""Instrumentation for the asymptotic behaviour of the streaming estimators.

Everything here needs the true parameter and is meant for simulation
studies only; the production recursions never see ``theta_star``.

The refined estimator splits exactly as

    theta_hat_n = vartheta_n + (G_n / n) sum_i psi_i(theta_star) + eps_n,
    vartheta_n  = -G_n I_n theta_star,     G_n = I(theta_tilde_n)^{-1},

so ``eps_n`` is obtained as a residual and carries the second-order Taylor
remainder of the score average without any third-derivative code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .estimator import EstimatorConfig, EstimatorState, current_theta_hat, vartheta
from .model import GaussianAR1Model, MarkovModel, make_rng
from .numkit import matvec, spd_inverse


@dataclass(frozen=True)
class AsymptoticDiagnostics:
    """Snapshot of the quantities that drive the limit theorems.

    Array fields carry the same leading batch axes as the estimator state.
    """

    n: int
    delta_norm: np.ndarray
    vartheta: np.ndarray
    linear_term: np.ndarray
    residual: np.ndarray
    qal_residual: np.ndarray
    in_drift: np.ndarray

    def to_dict(self) -> dict:
        if self.vartheta.ndim != 1:
            raise ValueError("to_dict serialises one snapshot at a time")
        return {
            "n": int(self.n),
            "delta_norm": float(self.delta_norm),
            "vartheta": [float(v) for v in self.vartheta],
            "qal_residual": float(self.qal_residual),
            "in_drift": float(self.in_drift),
        }


def qal_decomposition(state: EstimatorState, model: MarkovModel, theta_star, psi_sum_at_star) -> AsymptoticDiagnostics:
    """Split ``theta_hat_n`` into centring, linear term and residual.

    Parameters
    ----------
    state
        Estimator state after ``n >= 1`` transitions.
    theta_star
        True parameter.
    psi_sum_at_star
        ``sum_{i<=n} psi_i(theta_star)`` accumulated along the same stream.

    Returns
    -------
    AsymptoticDiagnostics
        ``residual = theta_hat - vartheta - G_n psi_sum / n``; ``in_drift`` is
        the max-norm of ``I_n + I(theta_star)``.
    """
    if state.n < 1:
        raise InvalidConfig("diagnostics need at least one transition")
    theta_star = np.asarray(theta_star, dtype=float)
    hat = current_theta_hat(state, model)
    center = vartheta(state, model, theta_star)
    g = spd_inverse(model.fisher_information(state.theta_tilde))
    linear = matvec(g, np.asarray(psi_sum_at_star, dtype=float)) / state.n
    resid = hat - center - linear
    drift = np.max(np.abs(state.info_avg + model.fisher_information(theta_star)), axis=(-2, -1))
    return AsymptoticDiagnostics(
        n=state.n,
        delta_norm=np.linalg.norm(state.theta_tilde - theta_star, axis=-1),
        vartheta=center,
        linear_term=linear,
        residual=resid,
        qal_residual=np.linalg.norm(resid, axis=-1),
        in_drift=drift,
    )


# ---------------------------------------------------------------------------
# assumption checks


def _require_closed_forms(model):
    if not isinstance(model, GaussianAR1Model):
        raise InvalidConfig("assumption checks need the closed-form conditional moments of the AR(1) model")


def _box_grid(model: MarkovModel, points: int) -> np.ndarray:
    lo, hi = model.box.lower, model.box.upper
    axes = [np.linspace(lo[k], hi[k], points) for k in range(model.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def expected_score_sq(model: GaussianAR1Model, theta, theta_star) -> np.ndarray:
    """``E[||psi_n(theta)||^2 | F_{n-1}]`` under ``theta_star``.

    The innovation ``Y_n`` is Gaussian given the past with a mean and
    variance that do not depend on ``Z_{n-1}``, so this is a constant.
    """
    theta = np.asarray(theta, dtype=float)
    rho, sigma = model.rho, theta[..., 1]
    c = 1.0 - rho * rho
    _, m2, m4 = model.conditional_y_moments(theta, theta_star)
    first = m2 / (sigma**4 * (1.0 + rho) ** 2)
    second = 1.0 / sigma**2 - 2.0 * m2 / (c * sigma**4) + m4 / (c * c * sigma**6)
    return first + second


def score_mean_zero_check(model: GaussianAR1Model, theta_star, points: int = 21) -> dict:
    """Grid search for zeros of the conditional score mean ``b``."""
    grid = _box_grid(model, points)
    b = np.linalg.norm(model.conditional_score_mean(grid, theta_star), axis=-1)
    idx = np.unravel_index(int(np.argmin(b)), b.shape)
    argmin = grid[idx]
    cell = (np.array(model.box.upper) - np.array(model.box.lower)) / (points - 1)
    far = np.any(np.abs(grid - theta_star) > cell, axis=-1)
    return {
        "grid_points": points,
        "argmin": [float(v) for v in argmin],
        "min_norm": float(b[idx]),
        "within_one_cell": bool(np.all(np.abs(argmin - theta_star) <= cell)),
        "min_norm_away_from_truth": float(np.min(b[far])),
    }


def score_growth_check(model: GaussianAR1Model, theta_star, points: int = 21) -> dict:
    """Growth constant ``max E||psi||^2 / (1 + ||theta - theta_star||^2)`` at two grid resolutions."""

    def c_emp(p):
        grid = _box_grid(model, p)
        ratio = expected_score_sq(model, grid, theta_star) / (1.0 + np.sum((grid - theta_star) ** 2, axis=-1))
        return float(np.max(ratio))

    coarse, fine = c_emp(points), c_emp(2 * points - 1)
    return {
        "grid_points": points,
        "c_emp": coarse,
        "c_emp_refined": fine,
        "relative_change": abs(fine - coarse) / coarse,
    }


def score_lipschitz_check(model: GaussianAR1Model, theta_star, pairs: int = 2000, seed: int = 0) -> dict:
    """Empirical Lipschitz ratio of ``b`` over random pairs in the box."""
    rng = make_rng(seed)
    lo, hi = np.array(model.box.lower), np.array(model.box.upper)
    a = lo + (hi - lo) * rng.random((pairs, model.dim))
    b = lo + (hi - lo) * rng.random((pairs, model.dim))
    num = np.linalg.norm(model.conditional_score_mean(a, theta_star) - model.conditional_score_mean(b, theta_star), axis=-1)
    den = np.linalg.norm(a - b, axis=-1)
    ratio = num / den
    return {"pairs": pairs, "max_ratio": float(np.max(ratio)), "median_ratio": float(np.median(ratio))}


def score_sup_check(model: MarkovModel, theta_star, sizes=(1_000, 10_000, 100_000), reps: int = 20, seed: int = 0) -> dict:
    """Median over chains of ``max_{i<=n} |psi_i(theta_star)|_inf / sqrt(n)`` at several ``n``."""
    theta_star = np.asarray(theta_star, dtype=float)
    n_max = max(sizes)
    noise = np.stack([make_rng(seed ^ r).standard_normal(n_max + 1) for r in range(reps)])
    z = model.path_from_noise(theta_star, noise)
    psi = model.score_and_hessian(theta_star, z[:, :-1], z[:, 1:]).psi
    running = np.maximum.accumulate(np.max(np.abs(psi), axis=-1), axis=-1)
    rows = np.stack([running[:, n - 1] / math.sqrt(n) for n in sizes], axis=-1)
    med = np.median(rows, axis=0)
    return {"sizes": list(sizes), "reps": reps, "median_ratio": [float(v) for v in med]}


def assumption_report(
    model: MarkovModel,
    theta_star,
    config: EstimatorConfig | None = None,
    *,
    grid_points: int = 21,
    pairs: int = 2000,
    sup_sizes=(1_000, 10_000, 100_000),
    sup_reps: int = 20,
    seed: int = 0,
) -> dict:
    """Desk-scale empirical checks of the regularity conditions.

    Covers the zero set of the conditional score mean, the quadratic growth
    of the conditional second moment of the score, a Lipschitz ratio of the
    score mean, and the running score maximum relative to ``sqrt(n)``.
    """
    _require_closed_forms(model)
    theta_star = np.asarray(theta_star, dtype=float)
    if not model.box.contains(theta_star):
        raise InvalidConfig("theta_star lies outside the parameter box")
    out = {
        "theta_star": [float(v) for v in theta_star],
        "score_mean_zero": score_mean_zero_check(model, theta_star, grid_points),
        "score_growth": score_growth_check(model, theta_star, grid_points),
        "score_lipschitz": score_lipschitz_check(model, theta_star, pairs, seed),
        "score_sup": score_sup_check(model, theta_star, sup_sizes, sup_reps, seed),
    }
    if config is not None:
        bound = model.beta_lower_bound()
        out["beta"] = {"value": config.beta, "lower_bound": bound, "exceeds_bound": config.beta > bound}
    return out
