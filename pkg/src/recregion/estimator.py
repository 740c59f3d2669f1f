"""Streaming stochastic-approximation and quasi-asymptotically linear estimators.

Per transition ``(Z_{n-1}, Z_n)`` the state is advanced as

    theta_tilde_n = theta_tilde_{n-1} + (beta / n) psi_n(theta_tilde_{n-1})
    I_n           = ((n-1)/n) I_{n-1} + (1/n) Psi_n(theta_tilde_{n-1})
    Gamma_n       = ((n-1)/n) Gamma_{n-1} + (1/n) (Id + beta I_n) psi_n(theta_tilde_{n-1})
    theta_hat_n   = I(theta_tilde_n)^{-1} (Gamma_n - I_n theta_tilde_n)

with ``Gamma_0 = 0`` and ``I_0 = 0``. The first observation only seeds
``z_prev``; ``n`` counts transitions.

Box projection
--------------
With ``projection="clamp"`` the base iterate is clipped to the parameter box
after every step. The refined estimator is an algebraic rearrangement of the
unprojected recursion: it relies on ``theta_tilde_n - theta_tilde_{n-1}``
being exactly ``(beta/n) psi_n``. A clip breaks that, and the error it
leaves in ``Gamma_n`` decays only like ``1/n`` while being scaled by
``n I_n``. The default ``gamma_update="consistent"`` therefore adds the
clip correction ``c_n`` (clipped minus raw iterate) as

    Gamma_n = ((n-1)/n) Gamma_{n-1} + (1/n) [(Id + beta I_n) psi_n + n I_n c_n],

which is bit-for-bit the plain recursion whenever no clip happens.
``gamma_update="plain"`` drops the correction term.

Clip corrections can be four orders of magnitude larger than the final
``Gamma_n`` and they multiply ``I_n``, so both averages are kept as
Neumaier-compensated running sums and divided by ``n`` on read. The averaged
values stay in ``EstimatorState.info_avg`` and ``EstimatorState.gamma``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, NamedTuple

import numpy as np

from .errors import InvalidConfig
from .model import MarkovModel
from .numkit import cholesky, matvec, spd_inverse

AUTO_BETA_FACTOR = 1.05

Projection = Literal["clamp", "none"]
GammaUpdate = Literal["consistent", "plain"]


@dataclass(frozen=True)
class EstimatorConfig:
    beta: float
    theta0: tuple[float, ...]
    projection: Projection = "clamp"
    gamma_update: GammaUpdate = "consistent"

    @classmethod
    def for_model(
        cls,
        model: MarkovModel,
        beta: float | None = None,
        theta0=None,
        projection: Projection = "clamp",
        gamma_update: GammaUpdate = "consistent",
    ) -> "EstimatorConfig":
        """Fill in defaults: ``beta = 1.05 * model.beta_lower_bound()`` and the box midpoint."""
        if beta is None:
            beta = AUTO_BETA_FACTOR * model.beta_lower_bound()
        if theta0 is None:
            theta0 = model.box.midpoint
        return cls(float(beta), tuple(float(v) for v in np.asarray(theta0).ravel()), projection, gamma_update)


@dataclass(frozen=True)
class EstimatorState:
    """Streaming state after ``n`` transitions.

    All arrays may carry leading batch axes (one entry per independent
    stream); ``n`` is shared.
    """

    n: int
    theta_tilde: np.ndarray
    info_avg: np.ndarray
    gamma: np.ndarray
    z_prev: np.ndarray | None
    projections: np.ndarray
    theta_hat: np.ndarray | None = None
    last_projected: np.ndarray | None = None
    beta_bound_ok: bool = True
    batch_shape: tuple[int, ...] = field(default=())
    info_sum: np.ndarray | None = None
    info_comp: np.ndarray | None = None
    gamma_sum: np.ndarray | None = None
    gamma_comp: np.ndarray | None = None


class StepRecord(NamedTuple):
    n: int
    z_prev: np.ndarray
    z_new: np.ndarray
    psi: np.ndarray
    hessian: np.ndarray
    theta_tilde_before: np.ndarray
    theta_tilde_after: np.ndarray
    theta_hat_after: np.ndarray | None
    projected: np.ndarray


def init_state(model: MarkovModel, config: EstimatorConfig, batch_shape: tuple[int, ...] = ()) -> EstimatorState:
    """Initial state ``n = 0`` with zero ``I_0`` and ``Gamma_0``."""
    d = model.dim
    if not np.isfinite(config.beta) or config.beta <= 0.0:
        raise InvalidConfig(f"beta must be positive, got {config.beta}")
    if config.projection not in ("clamp", "none"):
        raise InvalidConfig(f"unknown projection policy {config.projection!r}")
    if config.gamma_update not in ("consistent", "plain"):
        raise InvalidConfig(f"unknown gamma update {config.gamma_update!r}")
    theta0 = np.asarray(config.theta0, dtype=float)
    if theta0.shape != (d,):
        raise InvalidConfig(f"theta0 must have {d} components")
    if not model.box.contains(theta0):
        raise InvalidConfig(f"theta0={theta0.tolist()} lies outside the parameter box")
    bound_ok = config.beta > model.beta_lower_bound()
    if not bound_ok:
        warnings.warn(
            f"beta={config.beta:g} does not exceed the model bound {model.beta_lower_bound():g}",
            RuntimeWarning,
            stacklevel=2,
        )
    batch_shape = tuple(batch_shape)
    return EstimatorState(
        n=0,
        theta_tilde=np.broadcast_to(theta0, batch_shape + (d,)).copy(),
        info_avg=np.zeros(batch_shape + (d, d)),
        gamma=np.zeros(batch_shape + (d,)),
        z_prev=None,
        projections=np.zeros(batch_shape, dtype=np.int64),
        beta_bound_ok=bound_ok,
        batch_shape=batch_shape,
        info_sum=np.zeros(batch_shape + (d, d)),
        info_comp=np.zeros(batch_shape + (d, d)),
        gamma_sum=np.zeros(batch_shape + (d,)),
        gamma_comp=np.zeros(batch_shape + (d,)),
    )


def _advance_tilde(theta, psi, n, model, config):
    raw = theta + (config.beta / n) * psi
    if config.projection == "none":
        return raw, np.zeros_like(raw), np.zeros(raw.shape[:-1], dtype=bool)
    new = model.box.clip(raw)
    correction = new - raw
    return new, correction, np.any(correction != 0.0, axis=-1)


def _compensated_add(total, comp, x):
    """Neumaier summation: ``total + comp`` carries the running sum to within an ulp."""
    t = total + x
    lost = np.where(np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total)
    return t, comp + lost


def _sums(state, prefix: str, avg):
    total, comp = getattr(state, f"{prefix}_sum"), getattr(state, f"{prefix}_comp")
    if total is None:  # state assembled by hand from averages only
        return state.n * avg, np.zeros_like(avg)
    return total, comp


def _accumulate(state, n, psi, hessian, correction, projected, config):
    """Fold step ``n``'s Hessian and ``Gamma`` term into the compensated sums.

    Returns a dict of the updated ``info_avg``, ``gamma`` and their sums.
    """
    info_sum, info_comp = _compensated_add(*_sums(state, "info", state.info_avg), hessian)
    info = (info_sum + info_comp) / n
    incr = psi + config.beta * matvec(info, psi)
    if config.gamma_update == "consistent" and np.any(projected):
        incr = incr + n * matvec(info, correction)
    gamma_sum, gamma_comp = _compensated_add(*_sums(state, "gamma", state.gamma), incr)
    return {
        "info_avg": info,
        "info_sum": info_sum,
        "info_comp": info_comp,
        "gamma": (gamma_sum + gamma_comp) / n,
        "gamma_sum": gamma_sum,
        "gamma_comp": gamma_comp,
    }


def base_step(state: EstimatorState, model: MarkovModel, config: EstimatorConfig, z_new) -> EstimatorState:
    """Advance only the stochastic-approximation iterate ``theta_tilde``."""
    z_new = np.asarray(z_new, dtype=float)
    if state.z_prev is None:
        return replace(state, z_prev=z_new)
    n = state.n + 1
    psi = model.score_and_hessian(state.theta_tilde, state.z_prev, z_new).psi
    theta, _, projected = _advance_tilde(state.theta_tilde, psi, n, model, config)
    return replace(
        state,
        n=n,
        theta_tilde=theta,
        z_prev=z_new,
        projections=state.projections + projected,
        last_projected=projected,
        theta_hat=None,
    )


def refined_estimate(model: MarkovModel, theta_tilde, info_avg, gamma) -> np.ndarray:
    """``theta_hat = I(theta_tilde)^{-1} (Gamma - I_n theta_tilde)``."""
    finv = spd_inverse(model.fisher_information(theta_tilde))
    return matvec(finv, gamma - matvec(info_avg, theta_tilde))


def qale_step(
    state: EstimatorState,
    model: MarkovModel,
    config: EstimatorConfig,
    z_new,
    *,
    with_hat: bool = True,
    record: bool = False,
):
    """One transition of the full recursion.

    Order: score and Hessian at ``theta_tilde_{n-1}``; ``I_n``; the base
    step (with projection); ``Gamma_n``; then ``theta_hat_n`` from the
    model's Fisher information at the new base iterate. ``theta_hat`` is
    never projected.

    With ``with_hat=False`` the read-out is skipped (``theta_hat`` becomes
    ``None``); it can be recovered later with :func:`refined_estimate`.
    With ``record=True`` a ``(state, StepRecord)`` pair is returned.
    """
    z_new = np.asarray(z_new, dtype=float)
    if state.z_prev is None:
        new_state = replace(state, z_prev=z_new)
        return (new_state, None) if record else new_state

    n = state.n + 1
    ev = model.score_and_hessian(state.theta_tilde, state.z_prev, z_new)
    theta, correction, projected = _advance_tilde(state.theta_tilde, ev.psi, n, model, config)
    sums = _accumulate(state, n, ev.psi, ev.hessian, correction, projected, config)
    theta_hat = refined_estimate(model, theta, sums["info_avg"], sums["gamma"]) if with_hat else None

    new_state = replace(
        state,
        n=n,
        theta_tilde=theta,
        **sums,
        theta_hat=theta_hat,
        z_prev=z_new,
        projections=state.projections + projected,
        last_projected=projected,
    )
    if not record:
        return new_state
    rec = StepRecord(n, state.z_prev, z_new, ev.psi, ev.hessian, state.theta_tilde, theta, theta_hat, projected)
    return new_state, rec


def run_stream(model: MarkovModel, config: EstimatorConfig, observations: Iterable[float], *, with_hat: bool = True):
    """Feed a sequence ``Z_0, Z_1, ...`` through :func:`qale_step`; return the final state."""
    state = init_state(model, config)
    for z in observations:
        state = qale_step(state, model, config, z, with_hat=with_hat)
    return state


def replay(records: Iterable[StepRecord], model: MarkovModel, config: EstimatorConfig) -> EstimatorState:
    """Rebuild a state from its audit trail without touching the observations."""
    state = init_state(model, config)
    for rec in records:
        raw = rec.theta_tilde_before + (config.beta / rec.n) * rec.psi
        correction = rec.theta_tilde_after - raw
        state = replace(
            state,
            **_accumulate(state, rec.n, rec.psi, rec.hessian, correction, rec.projected, config),
            n=rec.n,
            theta_tilde=rec.theta_tilde_after,
            theta_hat=rec.theta_hat_after,
            z_prev=rec.z_new,
            projections=state.projections + rec.projected,
            last_projected=rec.projected,
        )
    return state


def vartheta(state: EstimatorState, model: MarkovModel, theta_star) -> np.ndarray:
    """Data-driven centring ``-I(theta_tilde_n)^{-1} I_n theta_star`` (simulation diagnostics)."""
    if state.n < 1:
        raise InvalidConfig("vartheta needs at least one transition")
    finv = spd_inverse(model.fisher_information(state.theta_tilde))
    ts = np.broadcast_to(np.asarray(theta_star, dtype=float), state.theta_tilde.shape)
    return -matvec(finv, matvec(state.info_avg, ts))


def current_theta_hat(state: EstimatorState, model: MarkovModel) -> np.ndarray:
    if state.n < 1:
        raise InvalidConfig("theta_hat is undefined before the first transition")
    if state.theta_hat is not None:
        return state.theta_hat
    return refined_estimate(model, state.theta_tilde, state.info_avg, state.gamma)


def u_statistic(state: EstimatorState, model: MarkovModel, theta) -> np.ndarray | float:
    """``n (theta_hat - theta)^T I(theta_tilde) (theta_hat - theta)`` via the Cholesky factor."""
    hat = current_theta_hat(state, model)
    L = cholesky(model.fisher_information(state.theta_tilde))
    return quadratic_stat(state.n, hat, L, theta)


def quadratic_stat(n: int, center, L, theta):
    """``n * ||L^T (center - theta)||^2``."""
    diff = np.asarray(center, dtype=float) - np.asarray(theta, dtype=float)
    u = matvec(np.swapaxes(L, -1, -2), diff)
    out = n * np.sum(u * u, axis=-1)
    return float(out) if np.ndim(out) == 0 else out
