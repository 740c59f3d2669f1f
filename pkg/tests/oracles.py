"""Independent reference computations shared by several test modules."""

import math

import numpy as np


def batch_forms(model, cfg, zs):
    """Closed summation forms rebuilt from scratch, independent of qale_step.

    Sums are correctly rounded (``math.fsum``) so the oracle itself does not
    lose digits when large terms cancel. Matrix-vector products are written
    out left to right; ``I psi`` cancels internally at the default settings,
    so a differently ordered product (BLAS) would differ in the last bits of
    every term.
    """
    theta = np.array(cfg.theta0, dtype=float)
    psis, hessians, thetas, corrections = [], [], [theta], []
    for i in range(1, len(zs)):
        ev = model.score_and_hessian(theta, zs[i - 1], zs[i])
        raw = theta + cfg.beta / i * ev.psi
        new = raw if cfg.projection == "none" else np.clip(raw, model.box.lower, model.box.upper)
        psis.append(ev.psi)
        hessians.append(ev.hessian)
        corrections.append(new - raw)
        theta = new
        thetas.append(theta)
    n = len(psis)

    def mean(mats):
        stacked = np.array(mats)
        flat = stacked.reshape(len(mats), -1)
        return np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])]).reshape(stacked.shape[1:]) / len(mats)

    info_running = [mean(hessians[: i + 1]) for i in range(n)]
    terms = []
    for i in range(n):
        t = psis[i] + cfg.beta * mat_vec(info_running[i], psis[i])
        if cfg.gamma_update == "consistent" and np.any(corrections[i] != 0.0):
            t = t + (i + 1) * mat_vec(info_running[i], corrections[i])
        terms.append(t)
    gamma = mean(terms)
    info = mean(hessians)
    hat = np.linalg.solve(model.fisher_information(theta), gamma - info @ theta)
    return theta, info, gamma, hat


def mat_vec(a, x):
    """``a @ x`` for one small matrix, summing each row left to right."""
    out = a[:, 0] * x[0]
    for k in range(1, a.shape[1]):
        out = out + a[:, k] * x[k]
    return out


def max_rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(b))))


def random_points(count, seed):
    """Parameters in the box and observations on the scale of the data."""
    rng = np.random.default_rng(seed)
    rho = rng.uniform(-0.8, 0.8, count)
    theta = np.stack([rng.uniform(-2, 2, count), rng.uniform(0.5, 2.9, count)], axis=-1)
    x = rng.normal(0, 2, count)
    y = rng.normal(0, 2, count)
    return rho, theta, x, y


def fd_score(model, theta, x, y, h=1e-5):
    fd = np.empty(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd[k] = (model.log_transition_density(theta + e, x, y) - model.log_transition_density(theta - e, x, y)) / (2 * h)
    return fd


def fd_hessian(model, theta, x, y, h=1e-5):
    fd = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd[:, k] = (model.score_and_hessian(theta + e, x, y).psi - model.score_and_hessian(theta - e, x, y).psi) / (2 * h)
    return fd


def spd_corpus(count=1000, seed=7):
    rng = np.random.default_rng(seed)
    for k in range(count):
        d = 1 + k % 4
        m = rng.normal(size=(d, d))
        yield m.T @ m + 1e-3 * np.eye(d)
