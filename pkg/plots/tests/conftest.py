"""CSV inputs for the figure tests.

The interesting inputs come from the solver CLI itself, so the tests
exercise the documented file contract end to end; synthetic files cover
the malformed cases the CLI never emits.
"""

from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path

import pytest

IDENTITY = [[1.0, 0.0], [0.0, 1.0]]

PARKING_PROBLEM = {
    "x_hat": [0.0, 1.0, 0.0],
    "x_star": [0.0, 0.0, 0.0],
    "horizon": 8.0,
    "max_segments": 4,
    "control_set": {
        "kind": "library",
        "trims": [
            {"id": 1, "u1": 0.0, "u2": 0.0, "name": "rest"},
            {"id": 2, "u1": 1.5, "u2": 0.0, "name": "move straight"},
            {"id": 3, "u1": -0.25, "u2": -1.0, "name": "circle clockwise"},
            {"id": 4, "u1": -0.25, "u2": 1.0, "name": "circle anti-clockwise"},
            {"id": 5, "u1": 0.0, "u2": 1.0, "name": "turn on the spot"},
        ],
    },
    "state_box": None,
    "cost": {"c1": 1.0, "R": IDENTITY, "c2": 0.0, "norm": "l2", "c3": 0.0},
}

LINE_PROBLEM = {
    "x_hat": [-2.0, 0.0, 0.0],
    "x_star": [0.0, 0.0, 0.0],
    "horizon": 1.0,
    "max_segments": 4,
    "control_set": {"kind": "grid", "u1_max": 2.0, "u2_max": 0.0, "du": 0.1},
    "state_box": None,
    "cost": {"c1": 1.0, "R": IDENTITY, "c2": 0.0, "norm": "l2", "c3": 0.0},
}


def _solver_cli() -> str:
    exe = shutil.which("trim-mpc")
    if exe is None:
        pytest.skip("trim-mpc CLI not installed; needed to generate inputs")
    return exe


def _run_mpc(problem: dict, out_dir: Path, delta: str) -> Path:
    problem_path = out_dir / "problem.json"
    problem_path.write_text(json.dumps(problem))
    subprocess.run(
        [
            _solver_cli(), "mpc", str(problem_path),
            "--delta", delta, "--max-steps", "60", "-o", str(out_dir),
        ],
        check=True,
        capture_output=True,
    )
    return out_dir / "trace.csv"


@pytest.fixture(scope="session")
def parking_trace_csv(tmp_path_factory) -> Path:
    """Closed-loop parking trace (library control set, delta = 1)."""
    return _run_mpc(PARKING_PROBLEM, tmp_path_factory.mktemp("parking"), "1.0")


@pytest.fixture(scope="session")
def line_trace_csv(tmp_path_factory) -> Path:
    """Closed-loop straight-line trace (grid control set, delta = 0.1)."""
    return _run_mpc(LINE_PROBLEM, tmp_path_factory.mktemp("line"), "0.1")


@pytest.fixture(scope="session")
def line_trajectory_csv(tmp_path_factory) -> Path:
    """Open-loop trajectory (no V/cost columns)."""
    out_dir = tmp_path_factory.mktemp("traj")
    problem_path = out_dir / "problem.json"
    problem_path.write_text(json.dumps(LINE_PROBLEM))
    subprocess.run(
        [_solver_cli(), "solve", str(problem_path), "-o", str(out_dir)],
        check=True,
        capture_output=True,
    )
    return out_dir / "trajectory.csv"


@pytest.fixture()
def header_only_csv(tmp_path) -> Path:
    path = tmp_path / "empty_trace.csv"
    path.write_text("t,x1,x2,x3,u1,u2,V,cost,replanned\n")
    return path


@pytest.fixture()
def mintime_style_csv(tmp_path) -> Path:
    """Synthetic pure-time-penalty trace: V drops by >= 1 per unit step."""
    rows = [
        "t,x1,x2,x3,u1,u2,V,cost,replanned",
        "0,0,1,0,0,1,3.3722,0,0",
        "1,0.2,0.8,0.9,1.5,0,2.3722,1,0",
        "2,1.1,0.3,0.4,1.5,0,1.3722,2,1",
        "3,0.3,0.05,0.1,0.3,-0.2,0.3722,3,0",
        "3.3722,0,0,0,0,0,0,3.3722,0",
    ]
    path = tmp_path / "mintime_trace.csv"
    path.write_text("\n".join(rows) + "\n")
    return path
