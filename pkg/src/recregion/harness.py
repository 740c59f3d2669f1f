"""Experiment plumbing: configuration, chain files, replicated Monte Carlo runs and reports.

Replications are independent chains keyed by ``seed ^ rep_index``. The
ensemble runner advances all of them in lockstep on arrays with a leading
replication axis; every chain sees exactly the arithmetic it would see in a
single-stream run, so :func:`replicate` reproduces any row bit for bit.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .diagnostics import qal_decomposition
from .errors import InvalidConfig, NonFiniteState, NotPositiveDefinite, ParseError
from .estimator import (
    EstimatorConfig,
    EstimatorState,
    init_state,
    qale_step,
    quadratic_stat,
    refined_estimate,
    vartheta,
)
from .model import GaussianAR1Model, ParameterBox, make_rng, quadrature_expected_log_density
from .numkit import chi2_cdf, chi2_quantile, cholesky, ks_distance, solve_lower, standard_normal_cdf
from .region import build_region, region_step, start_stream

SCHEMA_VERSION = 1
SEED_MASK = 0xFFFF_FFFF_FFFF_FFFF

MIN_REPS_COVERAGE = 50
MIN_REPS_RATE = 50
MIN_N_RATE = 10_000
MIN_REPS_NORMALITY = 200
MIN_REPS_CLT = 200

# Limiting Kolmogorov distribution of sqrt(R) * D_R.
KS_NULL_MEAN = math.sqrt(math.pi / 2.0) * math.log(2.0)
KS_NULL_SD = math.sqrt(math.pi**2 / 12.0 - KS_NULL_MEAN**2)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run.

    ``box`` holds ``(mu_lower, mu_upper, sigma_lower, sigma_upper)``.
    ``beta`` is a positive float or ``"auto"``; ``theta0`` is a pair or
    ``"midpoint"``.
    """

    rho: float = 0.5
    mu_star: float = 1.0
    sigma_star: float = 1.0
    box: tuple[float, float, float, float] = (-5.0, 5.0, 0.3, 3.0)
    beta: float | str = "auto"
    theta0: tuple[float, float] | str = "midpoint"
    n: int = 10_000
    reps: int = 200
    alpha: float = 0.05
    seed: int = 12345
    out: str | None = None

    def __post_init__(self):
        self.validate()

    @classmethod
    def reference_default(cls, **overrides) -> "ExperimentConfig":
        """Default experiment: ``rho=0.5``, ``theta*=(1,1)``, box ``[-5,5] x [0.3,3]``, ``alpha=0.05``."""
        return cls(**overrides)

    @property
    def is_default_model(self) -> bool:
        base = ExperimentConfig()
        keys = ("rho", "mu_star", "sigma_star", "box", "beta", "theta0", "alpha")
        return all(getattr(self, k) == getattr(base, k) for k in keys)

    @property
    def theta_star(self) -> np.ndarray:
        return np.array([self.mu_star, self.sigma_star])

    def model(self) -> GaussianAR1Model:
        a1, a2, b1, b2 = self.box
        return GaussianAR1Model(self.rho, ParameterBox((a1, b1), (a2, b2)))

    def estimator_config(self) -> EstimatorConfig:
        beta = None if self.beta == "auto" else float(self.beta)
        theta0 = None if self.theta0 == "midpoint" else self.theta0
        return EstimatorConfig.for_model(self.model(), beta=beta, theta0=theta0)

    def rep_seed(self, rep: int) -> int:
        return (self.seed ^ rep) & SEED_MASK

    def validate(self) -> None:
        if not (-1.0 < self.rho < 1.0):
            raise InvalidConfig(f"model.rho={self.rho} must lie in (-1, 1)")
        if len(self.box) != 4:
            raise InvalidConfig("box needs four bounds")
        model = self.model()
        if self.sigma_star <= 0.0:
            raise InvalidConfig("model.sigma_star must be positive")
        if not model.box.contains(self.theta_star):
            raise InvalidConfig("the true parameter lies outside the box")
        if self.beta != "auto":
            if isinstance(self.beta, str) or not math.isfinite(self.beta) or self.beta <= 0.0:
                raise InvalidConfig(f"beta must be positive or 'auto', got {self.beta!r}")
        if self.theta0 != "midpoint":
            if isinstance(self.theta0, str) or len(self.theta0) != 2 or not model.box.contains(self.theta0):
                raise InvalidConfig(f"theta0={self.theta0!r} must be 'midpoint' or a pair inside the box")
        if self.n < 1:
            raise InvalidConfig("n must be at least 1")
        if self.reps < 1:
            raise InvalidConfig("reps must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidConfig("alpha must lie in (0, 1)")
        if not (0 <= self.seed <= SEED_MASK):
            raise InvalidConfig("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["box"] = list(self.box)
        if not isinstance(self.theta0, str):
            out["theta0"] = list(self.theta0)
        out["reference_default"] = self.is_default_model
        return out


_KEYS = {
    "model.rho": "rho",
    "model.mu_star": "mu_star",
    "model.sigma_star": "sigma_star",
    "box": "box",
    "beta": "beta",
    "theta0": "theta0",
    "n": "n",
    "reps": "reps",
    "alpha": "alpha",
    "seed": "seed",
    "out": "out",
}


def _floats(text: str, count: int, key: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise InvalidConfig(f"{key}: expected {count} comma-separated numbers, got {text!r}") from None
    if len(vals) != count:
        raise InvalidConfig(f"{key}: expected {count} numbers, got {len(vals)}")
    return vals


def _convert(key: str, text: str):
    try:
        if key in ("rho", "mu_star", "sigma_star", "alpha"):
            return float(text)
        if key in ("n", "reps"):
            return int(text)
        if key == "seed":
            return int(text, 0)
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {text!r}") from None
    if key == "box":
        return _floats(text, 4, key)
    if key == "beta":
        if text == "auto":
            return text
        try:
            return float(text)
        except ValueError:
            raise InvalidConfig(f"beta: expected a number or 'auto', got {text!r}") from None
    if key == "theta0":
        return text if text == "midpoint" else _floats(text, 2, key)
    return text  # out


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse the flat ``key = value`` format; ``#`` starts a comment line."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        if key not in _KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        name = _KEYS[key]
        if name in values:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}")
        values[name] = _convert(name, value)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    if path is None:
        return parse_config("", **overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


# ---------------------------------------------------------------------------
# chain files


def simulate_chain(cfg: ExperimentConfig, n: int | None = None, rep: int = 0) -> np.ndarray:
    """``Z_0, ..., Z_n`` under ``theta_star`` with the stream for replication ``rep``."""
    n = cfg.n if n is None else n
    noise = make_rng(cfg.rep_seed(rep)).standard_normal(n + 1)
    return cfg.model().path_from_noise(cfg.theta_star, noise)


def write_chain(z: Iterable[float], out: TextIO) -> None:
    out.write("step,z\n")
    for k, v in enumerate(z):
        out.write(f"{k},{float(v)!r}\n")


def read_chain(src: TextIO | str | Path) -> np.ndarray:
    """Parse a ``step,z`` chain file; steps must run 0, 1, 2, ..."""
    if isinstance(src, (str, Path)):
        with open(src, encoding="utf-8") as fh:
            return read_chain(fh)
    values = []
    header_seen = False
    for lineno, raw in enumerate(src, start=1):
        line = raw.strip()
        if not line:
            continue
        if not header_seen:
            if line.replace(" ", "") != "step,z":
                raise ParseError("expected header 'step,z'", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError("expected two fields", lineno)
        try:
            step, z = int(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"cannot parse {line!r}", lineno) from None
        if step != len(values):
            raise ParseError(f"expected step {len(values)}, got {step}", lineno)
        if not math.isfinite(z):
            raise ParseError("non-finite observation", lineno)
        values.append(z)
    if not header_seen:
        raise ParseError("empty chain file", 1)
    if not values:
        raise ParseError("chain file has no observations")
    return np.array(values)


# ---------------------------------------------------------------------------
# single-stream outputs


ESTIMATE_HEADER = "n,mu_tilde,sigma_tilde,mu_hat,sigma_hat,projected"


def _check_finite(state: EstimatorState) -> None:
    if not (np.all(np.isfinite(state.theta_hat)) and np.all(np.isfinite(state.info_avg))):
        raise NonFiniteState(f"step {state.n}: the estimator state is no longer finite")


def estimate_rows(cfg: ExperimentConfig, z: Iterable[float]) -> Iterator[tuple]:
    """Yield ``(n, mu_tilde, sigma_tilde, mu_hat, sigma_hat, projected)`` for every transition."""
    model, est = cfg.model(), cfg.estimator_config()
    state = init_state(model, est)
    for value in z:
        with np.errstate(over="ignore", invalid="ignore"):
            state = qale_step(state, model, est, float(value))
        if state.n >= 1:
            _check_finite(state)
            t, h = state.theta_tilde, state.theta_hat
            yield state.n, float(t[0]), float(t[1]), float(h[0]), float(h[1]), int(state.last_projected)


def write_estimates(cfg: ExperimentConfig, z, out: TextIO) -> dict:
    out.write(ESTIMATE_HEADER + "\n")
    count = projections = 0
    for row in estimate_rows(cfg, z):
        n, mt, st, mh, sh, proj = row
        out.write(f"{n},{mt!r},{st!r},{mh!r},{sh!r},{proj}\n")
        count, projections = n, projections + proj
    est = cfg.estimator_config()
    summary = {"transitions": count, "projections": projections, "beta": est.beta}
    out.write(f"# transitions={count} projections={projections} beta={est.beta!r}\n")
    return summary


def region_records(cfg: ExperimentConfig, z: Iterable[float], stride: int = 1, with_truth: bool = True) -> Iterator[dict]:
    """One region snapshot every ``stride`` transitions."""
    if stride < 1:
        raise InvalidConfig("stride must be at least 1")
    model, est = cfg.model(), cfg.estimator_config()
    stream = start_stream(model, est, cfg.alpha)
    truth = cfg.theta_star if with_truth else None
    for value in z:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                stream = region_step(stream, model, est, float(value))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"step {stream.estimator.n + 1}: {exc}") from exc
        if stream.estimator.n >= 1:
            _check_finite(stream.estimator)
        n = stream.estimator.n
        if n >= 1 and n % stride == 0:
            yield stream.region.to_dict(truth)


def write_regions(cfg: ExperimentConfig, z, out: TextIO, stride: int = 1, with_truth: bool = True) -> int:
    lines = 0
    for rec in region_records(cfg, z, stride, with_truth):
        out.write(json.dumps(rec) + "\n")
        lines += 1
    return lines


# ---------------------------------------------------------------------------
# replicated runs


@dataclass(frozen=True)
class Snapshot:
    """Ensemble state at a checkpoint; arrays have a leading replication axis."""

    n: int
    state: EstimatorState
    psi_sum_star: np.ndarray | None = None


def _noise_block(rngs, m: int) -> np.ndarray:
    return np.stack([rng.standard_normal(m) for rng in rngs])


def iter_chain_blocks(cfg: ExperimentConfig, n: int, reps: int, chunk: int = 4096) -> Iterator[np.ndarray]:
    """Yield ``(reps, m)`` blocks that concatenate to ``Z_0..Z_n`` for every replication.

    Each replication owns a generator keyed by ``seed ^ rep``; drawing it in
    blocks gives the same stream as one draw of length ``n + 1``.
    """
    model, theta = cfg.model(), cfg.theta_star
    rngs = [make_rng(cfg.rep_seed(r)) for r in range(reps)]
    total, done, last = n + 1, 0, None
    while done < total:
        m = min(chunk, total - done)
        block = model.path_from_noise(theta, _noise_block(rngs, m), start=last)
        last = block[:, -1]
        done += m
        yield block


def run_ensemble(
    cfg: ExperimentConfig,
    checkpoints: Iterable[int],
    *,
    reps: int | None = None,
    track_star: bool = False,
    chunk: int = 4096,
) -> list[Snapshot]:
    """Run ``reps`` streams in lockstep and snapshot them at each checkpoint.

    The refined estimate is only formed at checkpoints. With
    ``track_star=True`` the score sum at the true parameter is carried
    along for the diagnostics.
    """
    reps = cfg.reps if reps is None else reps
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if not checkpoints or checkpoints[0] < 1:
        raise InvalidConfig("checkpoints must be positive")
    model, est = cfg.model(), cfg.estimator_config()
    theta_star = cfg.theta_star
    state = init_state(model, est, (reps,))
    psi_sum = np.zeros((reps, model.dim)) if track_star else None
    wanted = set(checkpoints)
    snaps: list[Snapshot] = []
    for block in iter_chain_blocks(cfg, checkpoints[-1], reps, chunk):
        for k in range(block.shape[1]):
            z = block[:, k]
            if track_star and state.z_prev is not None:
                psi_sum = psi_sum + model.score_and_hessian(theta_star, state.z_prev, z).psi
            state = qale_step(state, model, est, z, with_hat=False)
            if state.n in wanted:
                hat = refined_estimate(model, state.theta_tilde, state.info_avg, state.gamma)
                snaps.append(Snapshot(state.n, replace(state, theta_hat=hat), None if psi_sum is None else psi_sum.copy()))
    return snaps


@dataclass(frozen=True)
class ReplicationSummary:
    """Final quantities of one replication."""

    seed: int
    theta_tilde: np.ndarray
    theta_hat: np.ndarray
    vartheta: np.ndarray
    u_vartheta: float
    u_true: float
    diameter: float
    projections: int
    covered_vartheta: bool
    covered_true: bool

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = [float(x) for x in v] if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True)
class SnapshotStats:
    """Derived per-replication arrays at one checkpoint."""

    n: int
    theta_tilde: np.ndarray
    theta_hat: np.ndarray
    vartheta: np.ndarray
    chol: np.ndarray
    u_vartheta: np.ndarray
    u_true: np.ndarray
    diameter: np.ndarray
    projections: np.ndarray
    covered_vartheta: np.ndarray
    covered_true: np.ndarray
    diagnostics: dict | None = field(default=None)


def snapshot_stats(snap: Snapshot, cfg: ExperimentConfig) -> SnapshotStats:
    model = cfg.model()
    theta_star = cfg.theta_star
    state = snap.state
    region = build_region(state, model, cfg.alpha)
    center = vartheta(state, model, theta_star)
    u_v = np.atleast_1d(quadratic_stat(state.n, region.center, region.chol, center))
    u_t = np.atleast_1d(quadratic_stat(state.n, region.center, region.chol, np.broadcast_to(theta_star, center.shape)))
    diag = None
    if snap.psi_sum_star is not None:
        d = qal_decomposition(state, model, theta_star, snap.psi_sum_star)
        diag = {"qal_residual": d.qal_residual, "in_drift": d.in_drift, "delta_norm": d.delta_norm}
    return SnapshotStats(
        n=state.n,
        theta_tilde=state.theta_tilde,
        theta_hat=region.center,
        vartheta=center,
        chol=region.chol,
        u_vartheta=u_v,
        u_true=u_t,
        diameter=np.atleast_1d(region.diameter()),
        projections=state.projections,
        covered_vartheta=np.atleast_1d(region.contains(center)),
        covered_true=np.atleast_1d(region.contains(np.broadcast_to(theta_star, center.shape))),
        diagnostics=diag,
    )


def summaries(stats: SnapshotStats, cfg: ExperimentConfig) -> list[ReplicationSummary]:
    """Per-replication summaries, sorted by replication index."""
    return [
        ReplicationSummary(
            seed=cfg.rep_seed(r),
            theta_tilde=stats.theta_tilde[r],
            theta_hat=stats.theta_hat[r],
            vartheta=stats.vartheta[r],
            u_vartheta=float(stats.u_vartheta[r]),
            u_true=float(stats.u_true[r]),
            diameter=float(stats.diameter[r]),
            projections=int(stats.projections[r]),
            covered_vartheta=bool(stats.covered_vartheta[r]),
            covered_true=bool(stats.covered_true[r]),
        )
        for r in range(stats.theta_tilde.shape[0])
    ]


def replicate(cfg: ExperimentConfig, rep: int, n: int | None = None) -> ReplicationSummary:
    """Single-stream rerun of replication ``rep``; matches the ensemble row exactly."""
    n = cfg.n if n is None else n
    model, est = cfg.model(), cfg.estimator_config()
    state = init_state(model, est, (1,))
    for z in simulate_chain(cfg, n, rep):
        state = qale_step(state, model, est, np.array([z]), with_hat=False)
    hat = refined_estimate(model, state.theta_tilde, state.info_avg, state.gamma)
    stats = snapshot_stats(Snapshot(n, replace(state, theta_hat=hat)), cfg)
    row = summaries(stats, cfg)[0]
    return replace(row, seed=cfg.rep_seed(rep))


# ---------------------------------------------------------------------------
# statistics helpers


def proportion(flags) -> dict:
    flags = np.asarray(flags, dtype=float)
    p = float(np.mean(flags))
    return {"estimate": p, "se": math.sqrt(p * (1.0 - p) / flags.size)}


def mean_se(x) -> dict:
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else float("nan")
    return {"estimate": float(np.mean(x)), "se": sd / math.sqrt(x.size)}


def ks_report(sample, cdf) -> dict:
    """KS distance together with the mean and standard deviation of its null law."""
    sample = np.sort(np.asarray(sample, dtype=float))
    root = math.sqrt(sample.size)
    return {"distance": ks_distance(sample, cdf), "null_mean": KS_NULL_MEAN / root, "null_sd": KS_NULL_SD / root}


def loglog_fit(n, y) -> dict:
    """Least-squares slope of ``log y`` on ``log n`` with its standard error."""
    x, v = np.log(np.asarray(n, dtype=float)), np.log(np.asarray(y, dtype=float))
    xc = x - x.mean()
    slope = float(np.sum(xc * (v - v.mean())) / np.sum(xc * xc))
    intercept = float(v.mean() - slope * x.mean())
    resid = v - intercept - slope * x
    dof = x.size - 2
    se = math.sqrt(float(np.sum(resid * resid)) / dof / float(np.sum(xc * xc))) if dof > 0 else float("nan")
    return {"slope": slope, "intercept": intercept, "se": se, "band": [slope - 2.0 * se, slope + 2.0 * se]}


def _chi2(d: int):
    return lambda x: chi2_cdf(x, d)


def _header(kind: str, cfg: ExperimentConfig) -> dict:
    est = cfg.estimator_config()
    model = cfg.model()
    return {
        "schema_version": SCHEMA_VERSION,
        "report": kind,
        "config": cfg.to_dict(),
        "resolved": {"beta": est.beta, "theta0": list(est.theta0), "beta_lower_bound": model.beta_lower_bound()},
    }


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidConfig(message)


def _diag_block(stats: SnapshotStats) -> dict:
    d = stats.diagnostics
    root = math.sqrt(stats.n)
    return {
        "n": stats.n,
        "median_sqrt_n_qal_residual": float(np.median(root * d["qal_residual"])),
        "median_in_drift": float(np.median(d["in_drift"])),
        "median_delta_norm": float(np.median(d["delta_norm"])),
    }


# ---------------------------------------------------------------------------
# reports


def _final_stats(cfg: ExperimentConfig, snapshots, diagnostics: bool) -> SnapshotStats:
    if snapshots is None:
        snapshots = run_ensemble(cfg, [cfg.n], track_star=diagnostics)
    snap = next((s for s in snapshots if s.n == cfg.n), None)
    if snap is None:
        raise InvalidConfig(f"no snapshot at n={cfg.n}")
    if diagnostics and snap.psi_sum_star is None:
        raise InvalidConfig("diagnostics need snapshots that tracked the score at the truth")
    return snapshot_stats(snap, cfg)


def coverage_report(cfg: ExperimentConfig, *, diagnostics: bool = False, snapshots=None) -> dict:
    """Empirical coverage of the centring and of the truth, plus KS of ``U_n`` to chi-squared.

    ``snapshots`` may carry a precomputed :func:`run_ensemble` result that
    includes ``cfg.n``; otherwise the ensemble is run here.
    """
    _require(cfg.reps >= MIN_REPS_COVERAGE, f"coverage needs reps >= {MIN_REPS_COVERAGE}")
    stats = _final_stats(cfg, snapshots, diagnostics)
    d = cfg.model().dim
    out = _header("coverage", cfg)
    out.update(
        {
            "n": cfg.n,
            "reps": cfg.reps,
            "alpha": cfg.alpha,
            "kappa": chi2_quantile(d, cfg.alpha),
            "coverage_vartheta": proportion(stats.covered_vartheta),
            "coverage_true": proportion(stats.covered_true),
            "ks_u_vartheta_chi2": ks_report(stats.u_vartheta, _chi2(d)),
            "mean_projections": mean_se(stats.projections),
        }
    )
    if diagnostics:
        out["diagnostics"] = _diag_block(stats)
    return out


def rate_checkpoints(n: int, count: int = 9, start: int = 1_000) -> list[int]:
    return sorted(set(int(round(v)) for v in np.geomspace(start, n, count)))


def rate_report(cfg: ExperimentConfig, *, diagnostics: bool = False, checkpoints=None, snapshots=None) -> dict:
    """Mean squared error of both estimators along a log grid, with log-log slopes.

    Also reports the consistency medians and region diameters at each
    checkpoint, since they come from the same runs.
    """
    _require(cfg.reps >= MIN_REPS_RATE, f"rate needs reps >= {MIN_REPS_RATE}")
    _require(cfg.n >= MIN_N_RATE, f"rate needs n >= {MIN_N_RATE}")
    checkpoints = rate_checkpoints(cfg.n) if checkpoints is None else sorted(checkpoints)
    if snapshots is None:
        snaps = run_ensemble(cfg, checkpoints, track_star=diagnostics)
    else:
        by_n = {s.n: s for s in snapshots}
        missing = [c for c in checkpoints if c not in by_n]
        _require(not missing, f"snapshots missing checkpoints {missing}")
        snaps = [by_n[c] for c in checkpoints]
    theta_star = cfg.theta_star
    rows, diags = [], []
    for snap in snaps:
        st = snapshot_stats(snap, cfg)
        sq_t = np.sum((st.theta_tilde - theta_star) ** 2, axis=-1)
        sq_h = np.sum((st.theta_hat - theta_star) ** 2, axis=-1)
        rows.append(
            {
                "n": st.n,
                "mse_tilde": mean_se(sq_t),
                "mse_hat": mean_se(sq_h),
                "median_error_tilde": float(np.median(np.sqrt(sq_t))),
                "median_error_hat": float(np.median(np.sqrt(sq_h))),
                "median_diameter": float(np.median(st.diameter)),
                "mean_projections": float(np.mean(st.projections)),
            }
        )
        if diagnostics:
            diags.append(_diag_block(st))
    ns = [r["n"] for r in rows]
    out = _header("rate", cfg)
    bound_ok = cfg.estimator_config().beta > cfg.model().beta_lower_bound()
    out.update(
        {
            "reps": cfg.reps,
            "checkpoints": rows,
            "slope_mse_tilde": loglog_fit(ns, [r["mse_tilde"]["estimate"] for r in rows]),
            "slope_mse_hat": loglog_fit(ns, [r["mse_hat"]["estimate"] for r in rows]),
            "slope_diameter": loglog_fit(ns, [r["median_diameter"] for r in rows]),
            "beta_bound_violated": not bound_ok,
        }
    )
    if diagnostics:
        out["diagnostics"] = diags
    return out


def normality_report(cfg: ExperimentConfig, *, diagnostics: bool = False, snapshots=None) -> dict:
    """KS of the standardised refined estimator against the standard normal.

    ``xi = sqrt(n) L^T (theta_hat - vartheta)``. The negative control pairs
    each ``theta_hat`` with the centring of the next replication.
    """
    _require(cfg.reps >= MIN_REPS_NORMALITY, f"normality needs reps >= {MIN_REPS_NORMALITY}")
    st = _final_stats(cfg, snapshots, diagnostics)
    out = _header("normality", cfg)
    out.update(_normality_fields(st, cfg))
    if diagnostics:
        out["diagnostics"] = _diag_block(st)
    return out


def standardized_errors(st: SnapshotStats, centre) -> np.ndarray:
    diff = st.theta_hat - centre
    lt = np.swapaxes(st.chol, -1, -2)
    return math.sqrt(st.n) * np.einsum("rij,rj->ri", lt, diff)


def _normality_fields(st: SnapshotStats, cfg: ExperimentConfig) -> dict:
    d = st.theta_hat.shape[-1]
    xi = standardized_errors(st, st.vartheta)
    shuffled = standardized_errors(st, np.roll(st.vartheta, 1, axis=0))
    return {
        "n": st.n,
        "reps": int(xi.shape[0]),
        "ks_components": [ks_report(xi[:, j], standard_normal_cdf) for j in range(d)],
        "component_mean": [mean_se(xi[:, j]) for j in range(d)],
        "ks_u_vartheta_chi2": ks_report(st.u_vartheta, _chi2(d)),
        "negative_control_ks": [ks_report(shuffled[:, j], standard_normal_cdf) for j in range(d)],
    }


def score_sums_at_truth(cfg: ExperimentConfig, reps: int | None = None, chunk: int = 4096) -> np.ndarray:
    """``sum_{i<=n} psi_i(theta_star)`` per replication."""
    reps = cfg.reps if reps is None else reps
    model, theta = cfg.model(), cfg.theta_star
    total = np.zeros((reps, model.dim))
    prev = None
    for block in iter_chain_blocks(cfg, cfg.n, reps, chunk):
        z = block if prev is None else np.concatenate([prev[:, None], block], axis=1)
        psi = model.score_and_hessian(theta, z[:, :-1], z[:, 1:]).psi
        total = total + np.sum(psi, axis=1)
        prev = block[:, -1]
    return total


def clt_report(cfg: ExperimentConfig) -> dict:
    """Standardised score sums ``L_*^{-1} S`` with ``S = n^{-1/2} sum psi_i(theta_star)``."""
    _require(cfg.reps >= MIN_REPS_CLT, f"clt needs reps >= {MIN_REPS_CLT}")
    model = cfg.model()
    s = score_sums_at_truth(cfg) / math.sqrt(cfg.n)
    L = cholesky(model.fisher_information(cfg.theta_star))
    xi = solve_lower(np.broadcast_to(L, (s.shape[0],) + L.shape), s)
    out = _header("clt", cfg)
    out.update(
        {
            "n": cfg.n,
            "reps": cfg.reps,
            "ks_components": [ks_report(xi[:, j], standard_normal_cdf) for j in range(model.dim)],
            "raw_mean": [mean_se(s[:, j]) for j in range(model.dim)],
            "standardized_mean": [mean_se(xi[:, j]) for j in range(model.dim)],
        }
    )
    return out


def default_grid(cfg: ExperimentConfig) -> np.ndarray:
    """``theta_star`` and its four neighbours at distance 0.5 along the axes."""
    offsets = np.array([[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [0.0, 0.5], [0.0, -0.5]])
    return cfg.theta_star + offsets


def parse_grid(text: str) -> np.ndarray:
    """``"mu,sigma;mu,sigma;..."`` to an array of shape ``(k, 2)``."""
    pts = [_floats(p, 2, "grid") for p in text.split(";") if p.strip()]
    if not pts:
        raise InvalidConfig("grid is empty")
    return np.array(pts)


def batch_means_se(x: np.ndarray, batches: int = 100) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    m = x.size // batches
    if m < 2:
        raise InvalidConfig("series too short for batch means")
    means = x[: m * batches].reshape(batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def ergodic_report(cfg: ExperimentConfig, grid=None, *, separation: float = 0.2, nodes: int = 64) -> dict:
    """Path averages of the log transition density on one chain versus quadrature values.

    The average at ``theta_star`` is compared with every grid point at
    distance ``>= separation``; the paired difference must exceed three
    batch-means standard errors.
    """
    model = cfg.model()
    theta_star = cfg.theta_star
    grid = default_grid(cfg) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    _require(grid.shape[-1] == model.dim, "grid points must be (mu, sigma) pairs")
    _require(bool(np.all(model.box.contains(grid))), "every grid point must lie inside the box")
    z = simulate_chain(cfg)
    pi_star = model.log_transition_density(theta_star, z[:-1], z[1:])
    avg_star = float(np.mean(pi_star))
    points = []
    for theta in grid:
        pi = model.log_transition_density(theta, z[:-1], z[1:])
        avg = float(np.mean(pi))
        quad = quadrature_expected_log_density(model, theta, theta_star, nodes)
        diff = pi_star - pi
        dist = float(np.linalg.norm(theta - theta_star))
        diff_mean = avg_star - avg
        diff_se = batch_means_se(diff) if dist > 0.0 else 0.0
        entry = {
            "theta": [float(v) for v in theta],
            "distance": dist,
            "average": avg,
            "average_se": batch_means_se(pi),
            "quadrature": quad,
            "gap": abs(avg - quad),
            "star_minus_point": diff_mean,
            "star_minus_point_se": diff_se,
        }
        if dist >= separation:
            entry["separated"] = bool(diff_mean > 3.0 * diff_se)
        points.append(entry)
    out = _header("ergodic", cfg)
    out.update(
        {
            "n": cfg.n,
            "points": points,
            "maximizer_ok": all(p.get("separated", True) for p in points),
        }
    )
    return out


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def render_chain(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    write_chain(simulate_chain(cfg), buf)
    return buf.getvalue()
