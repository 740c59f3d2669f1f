"""Recursive estimation and confidence regions for parametric Markov chains."""

from .diagnostics import AsymptoticDiagnostics, assumption_report, qal_decomposition
from .errors import (
    DegenerateVariance,
    DomainError,
    EmptySample,
    InvalidConfig,
    NonFiniteState,
    NotPositiveDefinite,
    ParseError,
    RecRegionError,
)
from .estimator import (
    EstimatorConfig,
    EstimatorState,
    StepRecord,
    base_step,
    init_state,
    qale_step,
    refined_estimate,
    replay,
    run_stream,
    u_statistic,
    vartheta,
)
from .harness import ExperimentConfig, ReplicationSummary, load_config, parse_config
from .mle import MleState, mle_extreme_points, mle_init, mle_region_contains, mle_run, mle_step, mle_u_statistic
from .model import GaussianAR1Model, MarkovModel, ParameterBox, gaussian_iid, make_rng
from .region import ConfidenceRegion, RegionStream, build_region, extreme_points, region_step, start_stream

__all__ = [
    name
    for name in dir()
    if not name.startswith("_")
    and name not in {"diagnostics", "errors", "estimator", "harness", "mle", "model", "numkit", "region"}
]
__version__ = "0.1.0"
