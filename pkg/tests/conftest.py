"""Shared fixtures: Monte Carlo ensembles computed once per session and acceptance reporting."""

import pytest

from recregion.harness import ExperimentConfig, rate_checkpoints, run_ensemble

LONG_N = 100_000
LONG_REPS = 200
CALIB_N = 10_000
CALIB_REPS = 500


@pytest.fixture(scope="session")
def long_run():
    """Default experiment, 200 replications to n = 1e5, snapshots on a log grid plus n = 100."""
    cfg = ExperimentConfig(n=LONG_N, reps=LONG_REPS)
    checkpoints = [100] + rate_checkpoints(LONG_N)
    return cfg, run_ensemble(cfg, checkpoints, track_star=True)


@pytest.fixture(scope="session")
def calibration_run():
    """Default experiment, 500 replications to n = 1e4."""
    cfg = ExperimentConfig(n=CALIB_N, reps=CALIB_REPS)
    return cfg, run_ensemble(cfg, [CALIB_N], track_star=True)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion and fail the test on a miss."""

    def check(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        print(line)
        _CRITERIA.append(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
