"""Direct transcription: layout, derivatives, and small solves."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trim_mpc.collocation import (
    CollocationProblem,
    problem_from_dict,
    problem_to_dict,
    smooth_norm,
    solve_nlp,
    transcribe,
)
from trim_mpc.robot import flow_const_raw
from trim_mpc.symmetry import State

ORIGIN = State(0.0, 0.0, 0.0)

finite = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


# ---------------------------------------------------------------------------
# Smoothed norm


def test_smooth_norm_values():
    assert smooth_norm(0.0, 0.0) == 0.0
    assert smooth_norm(3.0, 4.0) == pytest.approx(5.0, abs=1e-8)
    with pytest.raises(ValueError):
        smooth_norm(1.0, 1.0, epsilon=0.0)


@given(u1=finite, u2=finite)
@settings(max_examples=100, deadline=None)
def test_smooth_norm_bounds(u1, u2):
    eps = 1e-6
    true = math.hypot(u1, u2)
    s = smooth_norm(u1, u2, epsilon=eps)
    assert 0.0 <= s <= true
    assert s >= true - eps


# ---------------------------------------------------------------------------
# Problem and layout


def test_problem_validation():
    with pytest.raises(ValueError, match="N"):
        CollocationProblem(x_hat=ORIGIN, T=1.0, N=1)
    with pytest.raises(ValueError, match="T"):
        CollocationProblem(x_hat=ORIGIN, T=0.0)
    with pytest.raises(ValueError, match="epsilon"):
        CollocationProblem(x_hat=ORIGIN, T=1.0, epsilon=0.0)
    with pytest.raises(ValueError, match="positive definite"):
        CollocationProblem(x_hat=ORIGIN, T=1.0, R=((1.0, 2.0), (2.0, 1.0)))


def test_dimensions():
    nlp = transcribe(CollocationProblem(x_hat=ORIGIN, T=1.0, N=50))
    assert nlp.n_vars == 350
    assert nlp.n_cons == 253
    tiny = transcribe(CollocationProblem(x_hat=ORIGIN, T=1.0, N=2))
    assert tiny.n_vars == 14
    assert tiny.n_cons == 13


def test_pack_unpack_round_trip():
    nlp = transcribe(CollocationProblem(x_hat=ORIGIN, T=1.0, N=7))
    rng = np.random.default_rng(0)
    X = rng.normal(size=(7, 5))
    U = rng.normal(size=(7, 2))
    X2, U2 = nlp.unpack(nlp.pack(X, U))
    assert np.array_equal(X, X2) and np.array_equal(U, U2)


def test_rest_point_satisfies_constraints():
    p = CollocationProblem(x_hat=State(0.3, -0.2, 0.9), T=1.0, N=4,
                           x_star=State(0.3, -0.2, 0.9))
    nlp = transcribe(p)
    X = np.tile([0.3, -0.2, 0.9, 0.0, 0.0], (4, 1))
    U = np.zeros((4, 2))
    c = nlp.constraints(nlp.pack(X, U))
    assert np.abs(c).max() <= 1e-15


def test_defects_shrink_at_third_order():
    # Sampling the exact flow of a turning control: the per-interval
    # trapezoidal defect is the local truncation error, O(h^3), so
    # halving h divides the worst defect by about 8.
    def worst_defect(N, T=2.0):
        end = State(*flow_const_raw(0.0, 0.0, 0.0, 1.0, 1.0, T))
        p = CollocationProblem(x_hat=ORIGIN, T=T, N=N, x_star=end)
        nlp = transcribe(p)
        X = np.zeros((N, 5))
        for k, t in enumerate(p.times):
            X[k, :3] = flow_const_raw(0.0, 0.0, 0.0, 1.0, 1.0, t)
            X[k, 3] = 2.0 * t  # running integral of u'u
            X[k, 4] = 2.0 * t
        U = np.ones((N, 2))
        c = nlp.constraints(nlp.pack(X, U))
        return np.abs(c[: 5 * (N - 1)]).max()

    ratio = worst_defect(21) / worst_defect(41)
    assert 6.0 < ratio < 10.0


# ---------------------------------------------------------------------------
# Derivatives


def test_constraint_gradient_against_finite_differences():
    p = CollocationProblem(
        x_hat=State(0.1, 1.0, 0.8), T=5.0, N=6,
        R=((4.0, -1.5), (-1.5, 1.0)), c2=0.1,
    )
    nlp = transcribe(p)
    rng = np.random.default_rng(1)
    z = nlp.initial_guess() + 0.1 * rng.standard_normal(nlp.n_vars)
    w = rng.standard_normal(nlp.n_cons)
    analytic = nlp.constraint_grad_vec(z, w)
    step = 1e-7
    fd = np.empty_like(analytic)
    for i in range(nlp.n_vars):
        zp = z.copy()
        zp[i] += step
        zm = z.copy()
        zm[i] -= step
        fd[i] = float(w @ (nlp.constraints(zp) - nlp.constraints(zm))) / (2 * step)
    scale = max(1.0, float(np.abs(fd).max()))
    assert np.abs(analytic - fd).max() / scale <= 1e-6


def test_penalty_gradient_consistent():
    p = CollocationProblem(x_hat=State(-1.0, 0.5, 0.2), T=2.0, N=5)
    nlp = transcribe(p)
    rng = np.random.default_rng(3)
    z = nlp.initial_guess() + 0.05 * rng.standard_normal(nlp.n_vars)
    val, grad = nlp.penalty(z, 100.0)
    d = rng.standard_normal(nlp.n_vars)
    d /= np.linalg.norm(d)
    eps = 1e-6
    num = (nlp.penalty(z + eps * d, 100.0)[0] - nlp.penalty(z - eps * d, 100.0)[0]) / (
        2 * eps
    )
    assert num == pytest.approx(float(grad @ d), rel=1e-5, abs=1e-7)


# ---------------------------------------------------------------------------
# Small solves


def test_trivial_problem_is_zero():
    sol = solve_nlp(transcribe(CollocationProblem(x_hat=ORIGIN, T=2.0, N=10)))
    assert sol.converged
    assert abs(sol.objective) <= 1e-10
    assert np.abs(sol.controls).max() <= 1e-8


def test_straight_line_matches_single_trim():
    # From (-1, 0, 0) to the origin in unit time the optimal control is
    # the constant (1, 0) with cost 1; the discrete optimum matches it
    # node for node because defects and cost share trapezoid weights.
    p = CollocationProblem(x_hat=State(-1.0, 0.0, 0.0), T=1.0, N=20)
    sol = solve_nlp(transcribe(p))
    assert sol.converged
    assert sol.objective == pytest.approx(1.0, abs=1e-4)
    u1 = sol.controls[:, 0]
    assert u1.max() - u1.min() <= 1e-4
    assert np.abs(sol.controls[:, 1]).max() <= 1e-4
    # x5 integrates the quadratic effort of a uniform control: linear.
    x5 = sol.states[:, 4]
    fit = np.polyfit(sol.times, x5, 1)
    assert np.abs(np.polyval(fit, sol.times) - x5).max() <= 1e-6


def test_solution_csv_shape():
    sol = solve_nlp(transcribe(CollocationProblem(x_hat=ORIGIN, T=1.0, N=3)))
    text = sol.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "t,x1,x2,x3,x4,x5,u1,u2"
    assert len(lines) == 4
    assert all(len(line.split(",")) == 8 for line in lines[1:])


def test_initial_guess_seeding():
    nlp = transcribe(CollocationProblem(x_hat=State(1.0, 2.0, 0.3), T=4.0, N=8))
    base = nlp.initial_guess()
    assert np.array_equal(base, nlp.initial_guess())
    seeded = nlp.initial_guess(seed=1)
    assert not np.array_equal(base, seeded)
    assert np.array_equal(seeded, nlp.initial_guess(seed=1))


# ---------------------------------------------------------------------------
# Serialization


def test_problem_dict_round_trip():
    p = CollocationProblem(
        x_hat=State(0.1, 1.0, 0.8), T=50.0, N=50,
        R=((4.0, -1.5), (-1.5, 1.0)), c2=0.1,
    )
    assert problem_from_dict(problem_to_dict(p)) == p


def test_problem_dict_malformed():
    with pytest.raises(ValueError, match="malformed"):
        problem_from_dict({})
    with pytest.raises(ValueError, match="malformed"):
        problem_from_dict({"x_hat": [0.0], "T": 1.0})
