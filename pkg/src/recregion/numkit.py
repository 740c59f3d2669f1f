"""Small dense linear algebra and distribution helpers.

Everything here is deterministic and pure. Matrices are plain ``numpy``
arrays of shape ``(..., d, d)`` and vectors ``(..., d)``; any leading axes
are treated as a batch, so a single routine serves one stream or a whole
ensemble of replications. The dimension is capped at ``MAX_DIM``.

The triangular routines loop over the (tiny) matrix index in Python and
vectorise over the batch, which keeps the floating-point operation order
identical for batched and unbatched inputs.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import DomainError, EmptySample, NotPositiveDefinite

MAX_DIM = 16
SYMMETRY_TOL = 1e-12
PIVOT_TOL = 1e-14

__all__ = [
    "MAX_DIM",
    "as_vector",
    "as_matrix",
    "as_symmetric",
    "matvec",
    "matmul",
    "cholesky",
    "solve_lower",
    "solve_upper",
    "spd_inverse",
    "sym_eigmax",
    "standard_normal_cdf",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
    "ks_distance",
]


# ---------------------------------------------------------------------------
# construction / validation


def _check_dim(d: int) -> None:
    if d < 1 or d > MAX_DIM:
        raise DomainError(f"dimension {d} outside 1..{MAX_DIM}")


def as_vector(x) -> np.ndarray:
    """Return ``x`` as a float array of shape ``(..., d)`` with finite entries."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    _check_dim(v.shape[-1])
    if not np.all(np.isfinite(v)):
        raise DomainError("vector has non-finite entries")
    return v


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {m.shape}")
    _check_dim(m.shape[-1])
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    return m


def as_symmetric(a) -> np.ndarray:
    """Validate squareness, finiteness and symmetry.

    Symmetry is checked entrywise as ``|a_ij - a_ji| <= 1e-12 * max(1, |a_ij|)``.
    """
    m = as_matrix(a)
    mt = np.swapaxes(m, -1, -2)
    if np.any(np.abs(m - mt) > SYMMETRY_TOL * np.maximum(1.0, np.abs(m))):
        raise DomainError("matrix is not symmetric")
    return m


# ---------------------------------------------------------------------------
# products


def matvec(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``a @ x`` over batch axes, with a fixed summation order."""
    d = a.shape[-1]
    out = a[..., :, 0] * x[..., None, 0]
    for k in range(1, d):
        out = out + a[..., :, k] * x[..., None, k]
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a.shape[-1]
    out = a[..., :, 0, None] * b[..., None, 0, :]
    for k in range(1, d):
        out = out + a[..., :, k, None] * b[..., None, k, :]
    return out


# ---------------------------------------------------------------------------
# Cholesky and triangular solves


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Parameters
    ----------
    a : array_like, shape (..., d, d)
        Symmetric positive-definite matrix or stack of matrices.

    Returns
    -------
    ndarray
        Lower-triangular factor with strictly positive diagonal.

    Raises
    ------
    NotPositiveDefinite
        If some squared pivot satisfies ``l_ii**2 <= 1e-14 * a_ii``.
    """
    a = as_symmetric(a)
    d = a.shape[-1]
    L = np.zeros_like(a)
    for j in range(d):
        s = a[..., j, j]
        for k in range(j):
            s = s - L[..., j, k] * L[..., j, k]
        diag = a[..., j, j]
        if np.any(diag <= 0.0) or np.any(s <= PIVOT_TOL * diag):
            raise NotPositiveDefinite(f"pivot {j} collapsed")
        ljj = np.sqrt(s)
        L[..., j, j] = ljj
        for i in range(j + 1, d):
            t = a[..., i, j]
            for k in range(j):
                t = t - L[..., i, k] * L[..., j, k]
            L[..., i, j] = t / ljj
    return L


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for ``L x = b``.

    ``b`` may carry extra trailing columns (shape ``(..., d, m)``) if passed
    with ``b.ndim == L.ndim``; otherwise it is a vector ``(..., d)``.
    """
    L = np.asarray(L, dtype=float)
    b = np.asarray(b, dtype=float)
    d = L.shape[-1]
    _check_dim(d)
    as_columns = b.ndim == L.ndim
    bb = b if as_columns else b[..., None]
    x = np.zeros(np.broadcast_shapes(L.shape[:-1], bb.shape[:-2] + (d,)) + bb.shape[-1:])
    for i in range(d):
        t = bb[..., i, :]
        for k in range(i):
            t = t - L[..., i, k, None] * x[..., k, :]
        x[..., i, :] = t / L[..., i, i, None]
    return x if as_columns else x[..., 0]


def solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back substitution for ``U x = b`` with ``U`` upper-triangular."""
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    d = U.shape[-1]
    _check_dim(d)
    as_columns = b.ndim == U.ndim
    bb = b if as_columns else b[..., None]
    x = np.zeros(np.broadcast_shapes(U.shape[:-1], bb.shape[:-2] + (d,)) + bb.shape[-1:])
    for i in range(d - 1, -1, -1):
        t = bb[..., i, :]
        for k in range(i + 1, d):
            t = t - U[..., i, k, None] * x[..., k, :]
        x[..., i, :] = t / U[..., i, i, None]
    return x if as_columns else x[..., 0]


def spd_inverse(a) -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor."""
    L = cholesky(a)
    d = L.shape[-1]
    eye = np.broadcast_to(np.eye(d), L.shape)
    linv = solve_lower(L, eye)
    inv = matmul(np.swapaxes(linv, -1, -2), linv)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))


def sym_eigmax(a: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Largest eigenvalue of a symmetric positive semi-definite matrix.

    Closed form for ``d <= 2``; power iteration otherwise.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    if d == 1:
        return a[..., 0, 0].copy()
    if d == 2:
        p, q, r = a[..., 0, 0], a[..., 0, 1], a[..., 1, 1]
        half_tr = 0.5 * (p + r)
        return half_tr + np.hypot(0.5 * (p - r), q)
    v = np.ones(a.shape[:-1]) / math.sqrt(d)
    lam = np.zeros(a.shape[:-2])
    for _ in range(max_iter):
        w = matvec(a, v)
        lam_new = np.sqrt(np.sum(w * w, axis=-1))
        v = w / np.where(lam_new > 0, lam_new, 1.0)[..., None]
        if np.all(np.abs(lam_new - lam) <= tol * np.maximum(1.0, lam_new)):
            return lam_new
        lam = lam_new
    return lam


# ---------------------------------------------------------------------------
# distributions


def _normal_cdf_scalar(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def standard_normal_cdf(x):
    """Standard normal CDF, ``0.5 * erfc(-x / sqrt(2))``.

    ``math.erfc`` is accurate to a few ulp over the whole real line, so the
    absolute error stays below 1e-15 and both tails keep full relative
    precision.
    """
    if np.ndim(x) == 0:
        return _normal_cdf_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_normal_cdf_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


def _gamma_q_halfint(d: int, t: float) -> float:
    """Upper regularised incomplete gamma ``Q(d/2, t)`` for integer ``d``.

    Uses the finite recurrences available at integer and half-integer
    shape: ``Q(1, t) = exp(-t)``, ``Q(1/2, t) = erfc(sqrt(t))`` and
    ``Q(a + 1, t) = Q(a, t) + t**a exp(-t) / Gamma(a + 1)``.
    """
    if t <= 0.0:
        return 1.0
    if d % 2 == 0:
        a, q = 1.0, math.exp(-t)
    else:
        a, q = 0.5, math.erfc(math.sqrt(t))
    log_t = math.log(t)
    while a < 0.5 * d:
        q += math.exp(a * log_t - t - math.lgamma(a + 1.0))
        a += 1.0
    return min(q, 1.0)


def _chi2_pdf_scalar(x: float, d: int) -> float:
    if x <= 0.0:
        return 0.0 if d > 2 else (0.5 if d == 2 else math.inf)
    a = 0.5 * d
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_sf(x, d: int):
    """Survival function ``P(chi2_d >= x)``."""
    _check_dim(d)
    if np.ndim(x) == 0:
        return _gamma_q_halfint(d, 0.5 * float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_gamma_q_halfint(d, 0.5 * v) for v in arr.ravel()]).reshape(arr.shape)


def chi2_cdf(x, d: int):
    """Lower regularised incomplete gamma ``P(d/2, x/2)``."""
    q = chi2_sf(x, d)
    return 1.0 - q


def _normal_quantile_rough(p: float) -> float:
    # Abramowitz & Stegun 26.2.23, |error| < 4.5e-4; only used as a start value.
    if p > 0.5:
        return -_normal_quantile_rough(1.0 - p)
    t = math.sqrt(-2.0 * math.log(p))
    num = 2.515517 + 0.802853 * t + 0.010328 * t * t
    den = 1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t**3
    return -(t - num / den)


def chi2_quantile(d: int, alpha: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Threshold ``kappa`` with ``P(chi2_d < kappa) = 1 - alpha``.

    Newton's method on ``Q(d/2, kappa/2) - alpha`` (stopping once the
    error is below ``tol * alpha``, so small tail levels keep their relative
    accuracy), started from the
    Wilson-Hilferty approximation and safeguarded by a bracket that falls
    back to bisection whenever a Newton step leaves it.
    """
    _check_dim(d)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha={alpha} outside (0, 1)")

    def excess(k: float) -> float:
        return _gamma_q_halfint(d, 0.5 * k) - alpha

    z = _normal_quantile_rough(1.0 - alpha)
    c = 2.0 / (9.0 * d)
    x = d * max(1.0 - c + z * math.sqrt(c), 0.1) ** 3

    lo, hi = 0.0, max(2.0 * x, 1.0)
    while excess(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)

    for _ in range(max_iter):
        f = excess(x)
        if abs(f) <= tol * alpha:
            return x
        if f > 0.0:
            lo = x
        else:
            hi = x
        dens = _chi2_pdf_scalar(x, d)
        step = f / dens if dens > 0.0 else math.inf
        x_new = x + step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4 * math.ulp(x):
            return x_new
        x = x_new
    return x


def ks_distance(sample, cdf: Callable) -> float:
    """Sup-norm distance between the empirical CDF of ``sample`` and ``cdf``.

    The supremum is taken over both sides of every jump of the empirical
    step function. Left limits of ``cdf`` are evaluated one ulp below each
    sample point, so right-continuous step CDFs are handled exactly too.
    Ties in the sample are merged.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("ks_distance needs at least one observation")
    if np.any(np.diff(x) < 0):
        raise DomainError("sample must be sorted ascending")
    n = x.size
    values, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts)
    upper = cum / n
    lower = (cum - counts) / n
    f_at = _eval_cdf(cdf, values)
    f_left = _eval_cdf(cdf, np.nextafter(values, -np.inf))
    return float(max(np.max(np.abs(upper - f_at)), np.max(np.abs(f_left - lower))))


def _eval_cdf(cdf: Callable, x: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(cdf(x), dtype=float)
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(cdf(v)) for v in x])
