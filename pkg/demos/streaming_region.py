"""Follow a confidence region as one AR(1) chain streams in.

Run with ``python3 demos/streaming_region.py``.
"""

import numpy as np

from recregion import ExperimentConfig, region_step, start_stream
from recregion.harness import simulate_chain

cfg = ExperimentConfig(n=20_000, seed=7)
model, est = cfg.model(), cfg.estimator_config()
print(f"rho={cfg.rho}  theta*={cfg.theta_star.tolist()}  beta={est.beta:.2f}")

# one observation at a time; only the previous stream state is kept
stream = start_stream(model, est, cfg.alpha)
checkpoints = {100, 1_000, 5_000, 20_000}
for z in simulate_chain(cfg):
    stream = region_step(stream, model, est, z)
    r = stream.region
    if r is not None and r.n in checkpoints:
        print(
            f"n={r.n:>6}  centre=({r.center[0]:+.4f}, {r.center[1]:.4f})"
            f"  diameter={r.diameter():.4f}  contains theta*: {bool(r.contains(cfg.theta_star))}"
        )

# the diameter shrinks like n^(-1/2); the centre is still drifting in,
# so early regions can miss theta*
print("extreme points at the end:")
print(np.array2string(stream.region.extreme_points, precision=4))
