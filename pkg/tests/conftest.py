"""Shared fixtures; the expensive closed-loop and search runs are
session-scoped so the acceptance tests and module tests reuse them."""

from __future__ import annotations

import time

import pytest

from trim_mpc import (
    GridControlSet,
    MpcConfig,
    ProblemSpec,
    StageCost,
    State,
    default_library,
    run,
    solve,
)
from trim_mpc.collocation import solve_example

IDENTITY = ((1.0, 0.0), (0.0, 1.0))
ORIGIN = State(0.0, 0.0, 0.0)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def table1_problem() -> ProblemSpec:
    return ProblemSpec(
        x_hat=State(-2.0, 0.0, 0.0),
        x_star=ORIGIN,
        cost=StageCost(c1=1.0, R=IDENTITY),
        control_set=GridControlSet(2.0, 0.0, 0.1),
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def table1_run(table1_problem):
    """(trace, wall seconds) of the straight-line quantized closed loop."""
    return timed(run, table1_problem, MpcConfig(delta=0.1, max_steps=60))


@pytest.fixture(scope="session")
def parking_problem() -> ProblemSpec:
    return ProblemSpec(
        x_hat=State(0.0, 1.0, 0.0),
        x_star=ORIGIN,
        cost=StageCost(c1=1.0, R=IDENTITY, c2=0.5),
        control_set=default_library(),
        horizon=8.0,
        max_segments=4,
    )


@pytest.fixture(scope="session")
def parking_run(parking_problem):
    """(solution, wall seconds) of the serial global sequence search."""
    return timed(solve, parking_problem, threads=1)


@pytest.fixture(scope="session")
def parking_mpc_run():
    """(trace, seconds): receding horizon on the parking problem with a
    pure quadratic stage cost."""
    problem = ProblemSpec(
        x_hat=State(0.0, 1.0, 0.0),
        x_star=ORIGIN,
        cost=StageCost(c1=1.0, R=IDENTITY),
        control_set=default_library(),
        horizon=8.0,
        max_segments=4,
    )
    return timed(run, problem, MpcConfig(delta=1.0, max_steps=12))


@pytest.fixture(scope="session")
def mintime_run():
    """(trace, seconds): free final time, pure time penalty."""
    problem = ProblemSpec(
        x_hat=State(0.0, 1.0, 0.0),
        x_star=ORIGIN,
        cost=StageCost(c1=0.0, R=IDENTITY, c2=0.0, c3=1.0),
        control_set=default_library(),
        horizon=None,
        max_segments=4,
    )
    return timed(run, problem, MpcConfig(delta=1.0, max_steps=12))


@pytest.fixture(scope="session")
def example4_run():
    """(solution, seconds) of the collocation cross-check problem."""
    return timed(solve_example)
