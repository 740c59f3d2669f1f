"""Parametric Markov transition models.

A model supplies the log transition density, its score and Hessian in the
parameter, the Fisher information, samplers, and the lower bound on the
stochastic-approximation gain. Parameters are arrays whose last axis is the
parameter dimension; extra leading axes are broadcast, which is how the
experiment harness runs many replications in lockstep.

Shipped kernel: the Gaussian AR(1) chain with known correlation ``rho`` and
unknown ``theta = (mu, sigma)``,

    Z_n | Z_{n-1} = x  ~  N(rho x + (1 - rho) mu, sigma^2 (1 - rho^2)),

started from its stationary law ``N(mu, sigma^2)``. Setting ``rho = 0``
gives i.i.d. Gaussian observations.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfig

LOG_2PI = math.log(2.0 * math.pi)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned parameter space ``[lower_1, upper_1] x ... x [lower_d, upper_d]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidConfig("box bounds must be non-empty and of equal length")
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in zip(lo, hi)):
            raise InvalidConfig(f"box needs finite lower < upper componentwise, got {lo}, {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def contains(self, theta) -> np.ndarray | bool:
        t = np.asarray(theta, dtype=float)
        inside = np.all((t >= self.lower) & (t <= self.upper), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def clip(self, theta) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)


class ScoreEval(NamedTuple):
    psi: np.ndarray
    """Gradient of the log transition density, shape ``(..., d)``."""
    hessian: np.ndarray
    """Hessian of the log transition density, shape ``(..., d, d)``."""


class MarkovModel(abc.ABC):
    """Interface a transition kernel has to provide to the estimators."""

    box: ParameterBox

    @property
    def dim(self) -> int:
        return self.box.dim

    def check_parameter(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        if t.shape[-1:] != (self.dim,):
            raise InvalidConfig(f"parameter must have trailing dimension {self.dim}")
        if not np.all(self.box.contains(t)):
            raise InvalidConfig(f"parameter {t.tolist()} outside the box")
        return t

    @abc.abstractmethod
    def log_transition_density(self, theta, x, y) -> np.ndarray: ...

    @abc.abstractmethod
    def score_and_hessian(self, theta, x, y) -> ScoreEval: ...

    @abc.abstractmethod
    def fisher_information(self, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def transition_from_noise(self, theta, x, g): ...

    @abc.abstractmethod
    def stationary_from_noise(self, theta, g): ...

    @abc.abstractmethod
    def beta_lower_bound(self) -> float: ...

    def path_from_noise(self, theta, noise, start=None) -> np.ndarray:
        """Chain driven by standard-normal ``noise`` of shape ``(..., m)``.

        Without ``start`` the first value is drawn from the stationary law
        and the rest from the kernel, giving ``Z_0, ..., Z_{m-1}``. With
        ``start`` every entry is a transition, continuing a chain whose last
        value was ``start``. Leading axes index independent chains; each
        chain goes through exactly the operations it would see on its own.
        """
        noise = np.asarray(noise, dtype=float)
        z = np.empty_like(noise)
        if noise.shape[-1] == 0:
            return z
        if start is None:
            z[..., 0] = self.stationary_from_noise(theta, noise[..., 0])
        else:
            z[..., 0] = self.transition_from_noise(theta, np.asarray(start, dtype=float), noise[..., 0])
        for k in range(1, noise.shape[-1]):
            z[..., k] = self.transition_from_noise(theta, z[..., k - 1], noise[..., k])
        return z

    def sample_transition(self, theta, x, rng: np.random.Generator):
        """Draw ``Z_n`` given ``Z_{n-1} = x`` using one standard-normal draw."""
        return self.transition_from_noise(theta, x, rng.standard_normal(np.shape(x)))

    def sample_stationary_initial(self, theta, rng: np.random.Generator):
        theta = np.asarray(theta, dtype=float)
        return self.stationary_from_noise(theta, rng.standard_normal(theta.shape[:-1]))


@dataclass(frozen=True)
class GaussianAR1Model(MarkovModel):
    """Gaussian AR(1) kernel with known ``rho`` and parameter ``(mu, sigma)``."""

    rho: float
    box: ParameterBox

    def __post_init__(self):
        if not (-1.0 < self.rho < 1.0):
            raise InvalidConfig(f"rho={self.rho} must satisfy |rho| < 1")
        if self.box.dim != 2:
            raise InvalidConfig("the AR(1) model has a 2-dimensional parameter (mu, sigma)")
        if self.box.lower[1] <= 0.0:
            raise InvalidConfig("the sigma lower bound must be strictly positive")

    # helpers ---------------------------------------------------------------

    def _innovation(self, theta, x, y):
        theta = np.asarray(theta, dtype=float)
        mu = theta[..., 0]
        return np.asarray(y) - self.rho * np.asarray(x) - (1.0 - self.rho) * mu

    # density and derivatives -------------------------------------------------

    def log_transition_density(self, theta, x, y):
        theta = np.asarray(theta, dtype=float)
        rho, sigma = self.rho, theta[..., 1]
        c = 1.0 - rho * rho
        Y = self._innovation(theta, x, y)
        return -0.5 * LOG_2PI - 0.5 * math.log(c) - np.log(sigma) - Y * Y / (2.0 * sigma * sigma * c)

    def score_and_hessian(self, theta, x, y) -> ScoreEval:
        theta = np.asarray(theta, dtype=float)
        rho, sigma = self.rho, theta[..., 1]
        c = 1.0 - rho * rho
        Y = self._innovation(theta, x, y)
        s2 = sigma * sigma
        s3 = s2 * sigma
        YY = Y * Y
        psi = np.stack([Y / (s2 * (1.0 + rho)), -1.0 / sigma + YY / (c * s3)], axis=-1)
        off = -2.0 * Y / ((1.0 + rho) * s3)
        h00 = np.broadcast_to(-(1.0 - rho) / ((1.0 + rho) * s2), off.shape)
        h11 = 1.0 / s2 - 3.0 * YY / (c * s2 * s2)
        hess = np.stack([np.stack([h00, off], axis=-1), np.stack([off, h11], axis=-1)], axis=-2)
        return ScoreEval(psi, hess)

    def fisher_information(self, theta):
        theta = np.asarray(theta, dtype=float)
        rho, sigma = self.rho, theta[..., 1]
        s2 = sigma * sigma
        out = np.zeros(theta.shape[:-1] + (2, 2))
        out[..., 0, 0] = (1.0 - rho) / ((1.0 + rho) * s2)
        out[..., 1, 1] = 2.0 / s2
        return out

    # closed-form conditional moments under the true parameter ----------------

    def conditional_score_mean(self, theta, theta_star):
        """``E[psi_n(theta) | F_{n-1}]`` when the data follow ``theta_star``."""
        theta = np.asarray(theta, dtype=float)
        theta_star = np.asarray(theta_star, dtype=float)
        rho = self.rho
        mu, sigma = theta[..., 0], theta[..., 1]
        gap = mu - theta_star[..., 0]
        s3 = sigma**3
        first = -(1.0 - rho) * gap / (sigma * sigma * (1.0 + rho))
        second = (theta_star[..., 1] ** 2 - sigma * sigma) / s3 + (1.0 - rho) * gap * gap / ((1.0 + rho) * s3)
        return np.stack([first, second], axis=-1)

    def conditional_y_moments(self, theta, theta_star):
        """First, second and fourth conditional moments of the innovation ``Y_n``."""
        theta = np.asarray(theta, dtype=float)
        theta_star = np.asarray(theta_star, dtype=float)
        rho = self.rho
        g = theta_star[..., 0] - theta[..., 0]
        ss2 = theta_star[..., 1] ** 2
        c = 1.0 - rho * rho
        m1 = (1.0 - rho) * g
        m2 = (1.0 - rho) ** 2 * g * g + ss2 * c
        m4 = (1.0 - rho) ** 4 * g**4 + 6.0 * (1.0 + rho) * (1.0 - rho) ** 3 * g * g * ss2 + 3.0 * ss2 * ss2 * c * c
        return m1, m2, m4

    def expected_log_density(self, theta, theta_star):
        """``E_{theta*}[log p_theta(Z_0, Z_1)]`` in closed form (stationary start)."""
        theta = np.asarray(theta, dtype=float)
        c = 1.0 - self.rho**2
        sigma = theta[..., 1]
        _, m2, _ = self.conditional_y_moments(theta, theta_star)
        return -0.5 * LOG_2PI - 0.5 * math.log(c) - np.log(sigma) - m2 / (2.0 * sigma * sigma * c)

    # sampling ----------------------------------------------------------------

    def transition_from_noise(self, theta, x, g):
        theta = np.asarray(theta, dtype=float)
        rho = self.rho
        return rho * x + (1.0 - rho) * theta[..., 0] + theta[..., 1] * math.sqrt(1.0 - rho * rho) * g

    def stationary_from_noise(self, theta, g):
        theta = np.asarray(theta, dtype=float)
        return theta[..., 0] + theta[..., 1] * g

    def path_from_noise(self, theta, noise, start=None) -> np.ndarray:
        noise = np.asarray(noise, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if noise.ndim != 1 or theta.ndim != 1 or noise.size == 0:
            return super().path_from_noise(theta, noise, start)
        # Same operation order as transition_from_noise, on Python floats,
        # which are much cheaper than 0-d arrays in a long loop.
        rho = self.rho
        drift = (1.0 - rho) * float(theta[0])
        scale = float(theta[1]) * math.sqrt(1.0 - rho * rho)
        g = noise.tolist()
        out = [0.0] * len(g)
        if start is None:
            x = float(theta[0]) + float(theta[1]) * g[0]
        else:
            x = rho * float(start) + drift + scale * g[0]
        out[0] = x
        for k in range(1, len(g)):
            x = rho * x + drift + scale * g[k]
            out[k] = x
        return np.array(out)

    # gain bound ----------------------------------------------------------------

    def beta_lower_bound(self) -> float:
        b1, b2 = self.box.lower[1], self.box.upper[1]
        rho = self.rho
        return max(b2**3 / (4.0 * b1), (1.0 + rho) * b2**3 / (2.0 * (1.0 - rho) * b1))


def gaussian_iid(box: ParameterBox) -> GaussianAR1Model:
    """I.i.d. ``N(mu, sigma^2)`` observations as the ``rho = 0`` chain."""
    return GaussianAR1Model(rho=0.0, box=box)


def quadrature_expected_log_density(model: GaussianAR1Model, theta, theta_star, nodes: int = 64) -> float:
    """``E_{theta*}[pi_1(theta)]`` by a ``nodes x nodes`` Gauss-Hermite rule over ``(Z_0, Z_1)``."""
    theta = np.asarray(theta, dtype=float)
    mu_s, sd_s = float(theta_star[0]), float(theta_star[1])
    rho = model.rho
    cond_sd = sd_s * math.sqrt(1.0 - rho * rho)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    z0 = mu_s + sd_s * x
    z1 = (rho * z0 + (1.0 - rho) * mu_s)[:, None] + cond_sd * x[None, :]
    vals = model.log_transition_density(theta, z0[:, None], z1)
    return float(w @ vals @ w)



def path_from_noise(model: MarkovModel, theta, noise, start=None) -> np.ndarray:
    """Functional alias of :meth:`MarkovModel.path_from_noise`."""
    return model.path_from_noise(theta, noise, start)
