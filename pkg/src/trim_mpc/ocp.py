"""Optimal control over trim concatenations.

The decision variables of the reduced problem are a sequence of trim ids
(length <= max_segments) and the nonnegative duration of each segment.
For a fixed sequence the durations solve a small smooth program with an
endpoint equality constraint; the outer search enumerates sequences up
to adjacent-duplicate merging.  A grid-valued control set on a pure
translation task short-circuits to an exact two-speed solution.

Solutions report the plan, the optimal value, the total plan duration
t_star and the (canonical) id sequence.  sequence_rank is the position
of that sequence in the raw lexicographic enumeration, or -1 when the
solution was produced by the translation fast path.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .costs import ProblemSpec, StageCost, box_contains
from .robot import ControlValue, flow_const_raw
from .symmetry import State, wrap_angle
from .trims import REST_ID, TrimLibrary, TrimPlan, TrimPrimitive, plan_flow

__all__ = [
    "ENDPOINT_TOL",
    "TIE_TOL",
    "GridControlSet",
    "InfeasibleProblem",
    "OcpSolution",
    "SequenceSolution",
    "canonical_sequences",
    "enumerate_sequences",
    "feasible_plan",
    "resolve_threads",
    "solve",
    "solve_fixed_sequence",
    "value",
]

# Endpoint feasibility threshold on ||(e1, e2, wrap(e3))||_2.
ENDPOINT_TOL = 1e-6
# Two candidate values within this of each other are treated as tied.
TIE_TOL = 1e-9
# Multi-start budget per sequence.
N_STARTS = 8
# Outer augmented-Lagrangian iteration cap.
MAX_OUTER = 200
# Sampling step used to check state-box membership of a candidate plan.
BOX_SAMPLE_DT = 1e-2
# Refuse raw enumerations larger than this (M ** max_segments).
MAX_RAW_SEQUENCES = 2_000_000


_ANCHOR = State(0.0, 0.0, 0.0)


def _rate(cost: StageCost, u: "ControlValue") -> float:
    """Running cost of holding u; StageCost rates do not depend on x."""
    return cost.rate(_ANCHOR, u)


class InfeasibleProblem(Exception):
    """No admissible plan reaches the target under the given problem."""


@dataclass(frozen=True)
class GridControlSet:
    """Axis-aligned grid of admissible controls.

    Values are u = (i du, j du) for integers i, j with |i du| <= u1_max
    and |j du| <= u2_max.  Both maxima must be integer multiples of du.
    """

    u1_max: float
    u2_max: float
    du: float

    def __post_init__(self) -> None:
        if not (self.du > 0.0 and math.isfinite(self.du)):
            raise ValueError("du must be positive and finite")
        for name, bound in (("u1_max", self.u1_max), ("u2_max", self.u2_max)):
            if bound < 0.0 or not math.isfinite(bound):
                raise ValueError(f"{name} must be nonnegative and finite")
            ratio = bound / self.du
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)):
                raise ValueError(f"{name} must be an integer multiple of du")

    def _axis(self, bound: float) -> tuple[float, ...]:
        n = int(round(bound / self.du))
        return tuple(k * self.du for k in range(-n, n + 1))

    def u1_values(self) -> tuple[float, ...]:
        return self._axis(self.u1_max)

    def u2_values(self) -> tuple[float, ...]:
        return self._axis(self.u2_max)

    def contains(self, u1: float, u2: float, tol: float = 1e-9) -> bool:
        for val, bound in ((u1, self.u1_max), (u2, self.u2_max)):
            if abs(val) > bound + tol:
                return False
            k = val / self.du
            if abs(k - round(k)) > tol / self.du:
                return False
        return True

    def to_library(self) -> TrimLibrary:
        return _grid_library(self.u1_max, self.u2_max, self.du)


@lru_cache(maxsize=32)
def _grid_library(u1_max: float, u2_max: float, du: float) -> TrimLibrary:
    """Enumerate the grid as a trim library; rest is id 1, rest sorted."""
    grid = GridControlSet(u1_max, u2_max, du)
    values = [
        (a, b)
        for a in grid.u1_values()
        for b in grid.u2_values()
        if not (a == 0.0 and b == 0.0)
    ]
    values.sort()
    prims = [TrimPrimitive(REST_ID, ControlValue(0.0, 0.0), name="rest")]
    for k, (a, b) in enumerate(values, start=REST_ID + 1):
        prims.append(TrimPrimitive(k, ControlValue(a, b), name=f"u=({a:g},{b:g})"))
    return TrimLibrary(prims)


@dataclass(frozen=True)
class SequenceSolution:
    """Optimal durations for one fixed id sequence."""

    sequence: tuple[int, ...]
    taus: tuple[float, ...]
    value: float
    plan: TrimPlan


def sequence_rank(
    ids: Sequence[int], canon: Sequence[int], max_segments: int
) -> int:
    """Rank of a canonical sequence in the raw lexicographic enumeration.

    Equals the index of the first raw tuple of length max_segments whose
    adjacent-merge equals canon, or -1 when canon cannot arise (too long,
    or containing ids outside the library).
    """
    ordered = tuple(sorted(ids))
    pos = {t: i for i, t in enumerate(ordered)}
    canon = tuple(canon)
    L = len(canon)
    if L == 0 or L > max_segments or any(t not in pos for t in canon):
        return -1
    if any(canon[i] == canon[i + 1] for i in range(L - 1)):
        return -1
    # Distribute the spare slots as extra copies; take the raw tuple that
    # sorts first (digits compared in library order).
    spare = max_segments - L
    best: Optional[tuple[int, ...]] = None
    for split in itertools.combinations_with_replacement(range(L), spare):
        counts = [1] * L
        for i in split:
            counts[i] += 1
        raw = tuple(
            t for t, c in zip(canon, counts) for _ in range(c)
        )
        key = tuple(pos[t] for t in raw)
        if best is None or key < best:
            best = key
    assert best is not None
    M = len(ordered)
    rank = 0
    for digit in best:
        rank = rank * M + digit
    return rank


@dataclass(frozen=True)
class OcpSolution:
    """Winner of the sequence search."""

    plan: TrimPlan
    value: float
    t_star: float
    sequence: tuple[int, ...]
    sequence_rank: int


def resolve_threads(threads: Optional[int] = None) -> int:
    """CLI/env-consistent worker count: arg, then TRIM_MPC_THREADS, then 1."""
    import os

    if threads is None:
        raw = os.environ.get("TRIM_MPC_THREADS", "")
        threads = int(raw) if raw.strip() else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


# ---------------------------------------------------------------------------
# Sequence enumeration


def enumerate_sequences(
    ids: Sequence[int], max_segments: int
) -> Iterable[tuple[int, ...]]:
    """All raw id tuples of length exactly max_segments, lexicographic."""
    return itertools.product(tuple(sorted(ids)), repeat=max_segments)


def _canonical_ids(seq: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for t in seq:
        if not out or out[-1] != t:
            out.append(t)
    return tuple(out)


def canonical_sequences(
    ids: Sequence[int], max_segments: int
) -> list[tuple[tuple[int, ...], int]]:
    """Distinct sequences after merging adjacent repeats, with ranks.

    The rank of a canonical sequence is the index of its first occurrence
    in the raw lexicographic enumeration; the list is rank-ascending.
    """
    n_raw = len(ids) ** max_segments
    if n_raw > MAX_RAW_SEQUENCES:
        raise ValueError(
            f"{len(ids)} trims over {max_segments} segments give {n_raw} raw "
            f"sequences (cap {MAX_RAW_SEQUENCES}); reduce the library or "
            "max_segments"
        )
    seen: dict[tuple[int, ...], int] = {}
    for rank, seq in enumerate(enumerate_sequences(ids, max_segments)):
        key = _canonical_ids(seq)
        if key not in seen:
            seen[key] = rank
    return sorted(seen.items(), key=lambda kv: kv[1])


# ---------------------------------------------------------------------------
# Endpoint map and constraint residuals


def _endpoint_raw(
    x0: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    taus: Sequence[float],
) -> tuple[float, float, float]:
    x1, x2, x3 = x0
    for (u1, u2), t in zip(controls, taus):
        x1, x2, x3 = flow_const_raw(x1, x2, x3, u1, u2, t)
    return x1, x2, x3


def _residual(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    taus: np.ndarray,
) -> np.ndarray:
    x1, x2, x3 = _endpoint_raw(x0, controls, taus)
    return np.array(
        [x1 - target[0], x2 - target[1], wrap_angle(x3 - target[2])]
    )


def _turn_move_turn(
    x0: tuple[float, float, float], target: tuple[float, float, float]
) -> tuple[float, float, float]:
    """Heading change to face the target, distance, final heading change.

    Angles are the wrapped increments of a rotate/translate/rotate
    maneuver; the straight leg is skipped when start and goal coincide.
    """
    dx = target[0] - x0[0]
    dy = target[1] - x0[1]
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return (wrap_angle(target[2] - x0[2]), 0.0, 0.0)
    bearing = math.atan2(dy, dx)
    a1 = wrap_angle(bearing - x0[2])
    a2 = wrap_angle(target[2] - bearing)
    return (a1, d, a2)


# ---------------------------------------------------------------------------
# Fixed-sequence solver: augmented Lagrangian over segment durations


def _sequence_seed(seed: int, sequence: tuple[int, ...]) -> int:
    """Stable per-sequence RNG seed (never the salted builtin hash)."""
    payload = (str(seed) + ":" + ",".join(map(str, sequence))).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _heading_reachable(
    dtheta: float, total: float, u2_values: Sequence[float], fixed_time: bool
) -> bool:
    """Can the net heading change be realized within the duration budget?

    The reachable set of x3 increments over total time T is T * [min u2,
    max u2]; the target is dtheta + 2 pi k for some integer k.  Free-time
    problems are never pruned on this test.
    """
    if not fixed_time or not u2_values:
        return True
    lo = total * min(u2_values)
    hi = total * max(u2_values)
    k_min = math.ceil((lo - dtheta) / (2.0 * math.pi) - 1e-12)
    k_max = math.floor((hi - dtheta) / (2.0 * math.pi) + 1e-12)
    return k_min <= k_max


def _warm_starts(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    total: Optional[float],
    rng: np.random.Generator,
    hint: Optional[tuple[float, ...]],
) -> list[np.ndarray]:
    """Initial duration vectors: hint, uniform, rotate/translate/rotate
    pattern matching, then Dirichlet draws up to N_STARTS."""
    n = len(controls)
    scale = total if total is not None else 1.0 + math.hypot(
        target[0] - x0[0], target[1] - x0[1]
    )
    starts: list[np.ndarray] = []
    if hint is not None and len(hint) == n:
        starts.append(np.maximum(np.asarray(hint, dtype=float), 0.0))
    starts.append(np.full(n, scale / n))

    a1, d, a2 = _turn_move_turn(x0, target)
    tmt = np.zeros(n)
    ok = True
    stage = 0  # 0: first turn, 1: straight leg, 2: second turn, 3: done
    needs = [a1, d, a2]
    for i, (u1, u2) in enumerate(controls):
        if stage >= 3:
            break
        if stage in (0, 2):
            if u1 == 0.0 and u2 != 0.0:
                want = needs[stage]
                # A turn trim can realize the wrapped angle in its own
                # direction of rotation, possibly going the long way round.
                ang = want if want * u2 >= 0.0 else want + math.copysign(
                    2.0 * math.pi, u2
                )
                tmt[i] = abs(ang / u2)
                stage += 1
                if stage == 1 and d < 1e-12:
                    stage = 2
        elif stage == 1:
            if u2 == 0.0 and u1 > 0.0:
                tmt[i] = d / u1
                stage += 1
    ok = stage >= 3 or (stage == 2 and abs(needs[2]) < 1e-12)
    if ok and tmt.sum() > 0.0:
        if total is not None:
            used = tmt.sum()
            if used <= total:
                rest = [i for i, (u1, u2) in enumerate(controls)
                        if u1 == 0.0 and u2 == 0.0 and tmt[i] == 0.0]
                if rest:
                    tmt[rest[0]] = total - used
                    starts.append(tmt)
                elif used > 0:
                    starts.append(tmt * (total / used))
        else:
            starts.append(tmt)

    while len(starts) < N_STARTS:
        w = rng.dirichlet(np.ones(n))
        mag = scale if total is not None else scale * rng.uniform(0.5, 2.0)
        starts.append(w * mag)
    return starts[:N_STARTS]


def _project_feasible(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    taus: np.ndarray,
    fixed_total: Optional[float],
) -> np.ndarray:
    """Gauss-Newton polish of the endpoint equations in the durations.

    The augmented-Lagrangian stage stops near ENDPOINT_TOL; tightening
    feasibility to ~1e-12 here makes values of analytically tied
    sequences agree well inside TIE_TOL, so ties break by the intended
    rules instead of by solver noise.
    """
    taus = taus.copy()
    n = len(taus)
    for _ in range(12):
        res = _residual(x0, target, controls, taus)
        if fixed_total is not None:
            res = np.append(res, taus.sum() - fixed_total)
        if np.linalg.norm(res) < 1e-13:
            break
        jac = np.empty((res.size, n))
        for j in range(n):
            step = 1e-7 * max(1.0, abs(taus[j]))
            up = taus.copy()
            up[j] += step
            r_up = _residual(x0, target, controls, up)
            if fixed_total is not None:
                r_up = np.append(r_up, up.sum() - fixed_total)
            jac[:, j] = (r_up - res) / step
        delta, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        new = np.maximum(taus + delta, 0.0)
        if np.linalg.norm(new - taus) < 1e-15:
            break
        taus = new
    return taus


def _constraints(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    total: Optional[float],
    taus: np.ndarray,
) -> np.ndarray:
    c = _residual(x0, target, controls, taus)
    if total is not None:
        c = np.append(c, taus.sum() - total)
    return c


def _kkt_polish(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    rates: Sequence[float],
    total: Optional[float],
    taus_in: tuple[float, ...],
    value_in: float,
) -> tuple[float, tuple[float, ...]]:
    """Newton polish of the switching-time KKT system.

    The objective is linear in the durations, so near a minimizer the
    Lagrangian curvature is all in the endpoint constraints; a few SQP
    steps push the value error to ~1e-11, which lets analytically tied
    sequences actually tie within TIE_TOL.  Falls back to the input when
    the iteration does not improve it.
    """
    taus = np.asarray(taus_in, dtype=float)
    rate_vec = np.asarray(rates, dtype=float)
    n = taus.size

    def cons(t: np.ndarray) -> np.ndarray:
        return _constraints(x0, target, controls, total, t)

    def jac(t: np.ndarray) -> np.ndarray:
        c0 = cons(t)
        out = np.empty((c0.size, n))
        for j in range(n):
            h = 1e-6 * max(1.0, abs(t[j]))
            up = t.copy()
            up[j] += h
            dn = t.copy()
            dn[j] = max(dn[j] - h, 0.0)
            out[:, j] = (cons(up) - cons(dn)) / (up[j] - dn[j])
        return out

    for _ in range(15):
        c = cons(taus)
        J = jac(taus)
        free = taus > 1e-10
        lam, *_ = np.linalg.lstsq(J.T, -rate_vec, rcond=None)
        grad = rate_vec + J.T @ lam
        if np.linalg.norm(c) < 1e-12 and (
            not free.any() or np.max(np.abs(grad[free])) < 1e-11
        ):
            break
        # Lagrangian Hessian restricted to free coordinates, by finite
        # differences of the constraint Jacobian.
        idx = np.flatnonzero(free)
        nf = idx.size
        if nf == 0:
            break
        H = np.zeros((nf, nf))
        for a, j in enumerate(idx):
            h = 1e-5 * max(1.0, abs(taus[j]))
            up = taus.copy()
            up[j] += h
            dJ = (jac(up) - J) / h
            H[:, a] = (dJ.T @ lam)[idx]
        H = 0.5 * (H + H.T)
        kkt = np.zeros((nf + c.size, nf + c.size))
        kkt[:nf, :nf] = H + 1e-12 * np.eye(nf)
        kkt[:nf, nf:] = J[:, idx].T
        kkt[nf:, :nf] = J[:, idx]
        rhs = np.concatenate([-grad[idx], -c])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        step = np.zeros(n)
        step[idx] = sol[:nf]
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 1.0:
            break
        new = np.maximum(taus + step, 0.0)
        if np.linalg.norm(new - taus) < 1e-16:
            break
        taus = new

    taus = _project_feasible(x0, target, controls, taus, total)
    ok = np.all(taus >= -1e-15) and float(
        np.linalg.norm(cons(taus))
    ) <= ENDPOINT_TOL
    val = float(rate_vec @ taus)
    if not ok or val > value_in + 1e-9:
        return value_in, taus_in
    taus = np.where(taus < 1e-12, 0.0, taus)
    return float(rate_vec @ taus), tuple(float(t) for t in taus)


def _solve_sequence(
    x0: tuple[float, float, float],
    target: tuple[float, float, float],
    controls: Sequence[tuple[float, float]],
    rates: Sequence[float],
    total: Optional[float],
    seed: int,
    hint: Optional[tuple[float, ...]] = None,
) -> Optional[tuple[float, tuple[float, ...]]]:
    """Best feasible durations for one control sequence, or None.

    Outer augmented-Lagrangian loop on the endpoint equalities (and the
    total-duration equality when the horizon is fixed); inner problem is
    bound-constrained (tau >= 0) and solved by L-BFGS-B.  Multi-start
    with deterministic seeds; each converged start is polished back onto
    the constraint manifold.
    """
    n = len(controls)
    rng = np.random.default_rng(seed)
    rate_vec = np.asarray(rates, dtype=float)
    if total is not None:
        cap = total
    else:
        # Generous duration cap for free final time; keeps the inner
        # iterates finite without clipping plausible solutions.
        dist = math.hypot(target[0] - x0[0], target[1] - x0[1])
        cap = 100.0 * (1.0 + dist)
    bounds = [(0.0, cap)] * n

    def run_start(tau0: np.ndarray) -> Optional[tuple[float, np.ndarray]]:
        lam = np.zeros(4 if total is not None else 3)
        mu = 10.0
        taus = np.minimum(tau0.copy(), cap)
        best_viol = math.inf
        stall = 0
        for _ in range(MAX_OUTER):
            def objective(t: np.ndarray) -> float:
                c = _residual(x0, target, controls, t)
                if total is not None:
                    c = np.append(c, t.sum() - total)
                val = rate_vec @ t + lam @ c + 0.5 * mu * (c @ c)
                return float(val) if math.isfinite(val) else 1e30

            res = minimize(
                objective,
                np.clip(taus, 0.0, cap),
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 120, "ftol": 1e-14, "gtol": 1e-10},
            )
            taus = np.clip(np.nan_to_num(res.x, nan=0.0), 0.0, cap)
            c = _residual(x0, target, controls, taus)
            if total is not None:
                c = np.append(c, taus.sum() - total)
            viol = float(np.linalg.norm(c))
            if viol <= ENDPOINT_TOL:
                taus = _project_feasible(x0, target, controls, taus, total)
                c2 = _residual(x0, target, controls, taus)
                if total is not None:
                    c2 = np.append(c2, taus.sum() - total)
                if float(np.linalg.norm(c2)) <= ENDPOINT_TOL:
                    return float(rate_vec @ taus), taus
                return None
            if viol <= 0.25 * best_viol:
                best_viol = viol
                stall = 0
                lam = lam + mu * c
            else:
                stall += 1
                mu = min(mu * 10.0, 1e10)
            if stall >= 6:
                return None
        return None

    best: Optional[tuple[float, np.ndarray]] = None
    for tau0 in _warm_starts(x0, target, controls, total, rng, hint):
        out = run_start(tau0)
        if out is None:
            continue
        val, taus = out
        if best is None or val < best[0] - 1e-12 or (
            abs(val - best[0]) <= 1e-12
            and tuple(taus) < tuple(best[1])
        ):
            best = (val, taus)
    if best is None:
        return None
    val, taus = best
    taus = np.where(taus < 1e-12, 0.0, taus)
    return float(rate_vec @ taus), tuple(float(t) for t in taus)


def solve_fixed_sequence(
    problem: ProblemSpec,
    sequence: Sequence[int],
    seed: int = 0,
    hint: Optional[Sequence[float]] = None,
) -> Optional[OcpSolution]:
    """Optimize segment durations for a fixed trim id sequence.

    Returns None when no duration vector reaches the target within
    ENDPOINT_TOL (for a fixed horizon, while also filling it exactly).
    Raises ValueError on a degenerate sequence (only rest trims while
    x_hat differs from x_star).
    """
    library = _materialize(problem)
    _require_stage_cost(problem)
    seq = tuple(int(s) for s in sequence)
    prims = [library.get(t) for t in seq]
    x0 = (problem.x_hat.x1, problem.x_hat.x2, problem.x_hat.x3)
    target = (problem.x_star.x1, problem.x_star.x2, problem.x_star.x3)
    if all(p.is_rest for p in prims):
        res0 = _residual(x0, target, [(0.0, 0.0)], np.zeros(1))
        if float(np.linalg.norm(res0)) > ENDPOINT_TOL:
            raise ValueError(
                "degenerate sequence: only rest trims but x_hat != x_star"
            )
    controls = [p.u.as_tuple() for p in prims]
    rates = [_rate(problem.cost, p.u) for p in prims]
    out = _solve_sequence(
        x0,
        target,
        controls,
        rates,
        problem.horizon,
        _sequence_seed(seed, seq),
        hint=tuple(hint) if hint is not None else None,
    )
    if out is None:
        return None
    val, taus = _kkt_polish(x0, target, controls, rates, problem.horizon, out[1], out[0])
    canon = TrimPlan(tuple(zip(prims, taus))).canonical()
    t_star = problem.horizon if problem.horizon is not None else canon.duration
    return OcpSolution(
        plan=canon,
        value=val,
        t_star=float(t_star),
        sequence=canon.ids(),
        sequence_rank=sequence_rank(
            library.ids(), canon.ids(), problem.max_segments
        ),
    )


# ---------------------------------------------------------------------------
# Pure-translation fast path


def _fast_path(problem: ProblemSpec, library: TrimLibrary) -> Optional[OcpSolution]:
    """Exact solution for on-axis translation on a fixed horizon.

    Applies when the control set is a grid, the cost matrix has no
    cross-weighting (diagonal R), and target differs from the start only
    along the heading axis of the start frame.  The mean speed d/T is
    realized by the two adjacent grid speeds; by convexity of the rate in
    u1 this two-level mix is optimal, and the higher-cost level is
    applied first.
    """
    grid = problem.control_set
    if not isinstance(grid, GridControlSet):
        return None
    if problem.horizon is None or problem.state_box is not None:
        return None
    cost = problem.cost
    R = np.asarray(cost.R, dtype=float)
    if abs(R[0, 1]) > 0.0 or abs(R[1, 0]) > 0.0:
        return None
    x0, xf = problem.x_hat, problem.x_star
    tol = 1e-12
    if abs(wrap_angle(xf.x3 - x0.x3)) > tol:
        return None
    # Displacement expressed in the start frame must be purely forward.
    c, s = math.cos(x0.x3), math.sin(x0.x3)
    dx = xf.x1 - x0.x1
    dy = xf.x2 - x0.x2
    fwd = c * dx + s * dy
    lat = -s * dx + c * dy
    if abs(lat) > tol:
        return None
    T = problem.horizon
    m = fwd / T
    if abs(m) > grid.u1_max + 1e-12:
        raise InfeasibleProblem(
            f"mean speed {m:g} exceeds the grid bound {grid.u1_max:g}"
        )
    m = max(-grid.u1_max, min(grid.u1_max, m))
    du = grid.du
    k_lo = math.floor(m / du + 1e-12)
    u_lo = k_lo * du
    u_hi = u_lo + du
    if abs(m - u_lo) <= 1e-12 * max(1.0, abs(m)):
        levels = [(u_lo, T)]
    elif abs(m - u_hi) <= 1e-12 * max(1.0, abs(m)):
        levels = [(u_hi, T)]
    else:
        tau_hi = T * (m - u_lo) / du
        levels = [(u_hi, tau_hi), (u_lo, T - tau_hi)]

    def rate_of(u1: float) -> float:
        return _rate(cost, ControlValue(u1, 0.0))

    # Higher running cost first; break rate ties toward larger |u1|.
    levels.sort(key=lambda lv: (rate_of(lv[0]), abs(lv[0])), reverse=True)
    segments = []
    val = 0.0
    if problem.max_segments < len(levels):
        return None
    for u1, tau in levels:
        if tau <= 0.0:
            continue
        prim = _grid_primitive(library, u1, 0.0)
        segments.append((prim, tau))
        val += tau * rate_of(u1)
    if not segments:
        segments = [(library.get(REST_ID), T)]
        val = T * rate_of(0.0)
    plan = TrimPlan(tuple(segments))
    return OcpSolution(
        plan=plan,
        value=val,
        t_star=T,
        sequence=plan.ids(),
        sequence_rank=-1,
    )


def _grid_primitive(library: TrimLibrary, u1: float, u2: float) -> TrimPrimitive:
    for prim in library.trims():
        if abs(prim.u.u1 - u1) <= 1e-12 and abs(prim.u.u2 - u2) <= 1e-12:
            return prim
    raise KeyError(f"no grid trim with u=({u1!r}, {u2!r})")


# ---------------------------------------------------------------------------
# Feasibility certificate


def feasible_plan(
    x_hat: State,
    x_star: State,
    u1_max: float,
    u2_max: float,
) -> TrimPlan:
    """Rotate, translate, rotate plan reaching x_star exactly.

    Uses saturated ad-hoc trims (not tied to any library): turn in place
    at |u2| = u2_max through the shorter angular direction, drive the
    straight-line distance at u1 = u1_max.  Gives a finite upper bound on
    any free-time value function with these bounds.
    """
    if u1_max <= 0.0 or u2_max <= 0.0:
        raise ValueError("control bounds must be positive")
    x0 = (x_hat.x1, x_hat.x2, x_hat.x3)
    xf = (x_star.x1, x_star.x2, x_star.x3)
    a1, d, a2 = _turn_move_turn(x0, xf)
    segments: list[tuple[TrimPrimitive, float]] = []

    def add_turn(trim_id: int, angle: float, name: str) -> None:
        if abs(angle) < 1e-15:
            return
        w = math.copysign(u2_max, angle)
        segments.append(
            (TrimPrimitive(trim_id, ControlValue(0.0, w), name=name), abs(angle) / u2_max)
        )

    add_turn(2, a1, "align")
    if d > 0.0:
        segments.append(
            (TrimPrimitive(3, ControlValue(u1_max, 0.0), name="advance"), d / u1_max)
        )
    add_turn(4, a2, "settle")
    if not segments:
        segments.append((TrimPrimitive(REST_ID, ControlValue(0.0, 0.0), name="rest"), 0.0))
        return TrimPlan(tuple(segments))
    return TrimPlan(tuple(segments)).canonical()


# ---------------------------------------------------------------------------
# Full search


def _require_stage_cost(problem: ProblemSpec) -> None:
    if not isinstance(problem.cost, StageCost):
        raise TypeError(
            "the sequence solver needs a control-only running cost; "
            f"got {type(problem.cost).__name__}"
        )


def _materialize(problem: ProblemSpec) -> TrimLibrary:
    cs = problem.control_set
    if isinstance(cs, TrimLibrary):
        return cs
    if isinstance(cs, GridControlSet):
        return cs.to_library()
    raise TypeError(f"unsupported control set {type(cs).__name__}")


def _integral_prefix(plan: TrimPlan, cost: StageCost, delta: float) -> float:
    """Running cost accumulated by the plan over [0, delta]."""
    acc = 0.0
    left = delta
    for prim, tau in plan.segments:
        if left <= 0.0:
            break
        dt = min(tau, left)
        acc += dt * _rate(cost, prim.u)
        left -= dt
    return acc


def _box_ok(problem: ProblemSpec, plan: TrimPlan) -> bool:
    if problem.state_box is None:
        return True
    traj = plan_flow(problem.x_hat, plan)
    for t, x, _ in traj.sample(BOX_SAMPLE_DT):
        if not box_contains(problem.state_box, x, tol=1e-9):
            return False
    return True


def _candidate_entry(
    problem: ProblemSpec,
    library: TrimLibrary,
    seq: tuple[int, ...],
    rank: int,
    seed: int,
    hint: Optional[tuple[float, ...]],
) -> Optional[tuple[float, int, tuple[int, ...], tuple[float, ...]]]:
    prims = [library.get(t) for t in seq]
    controls = [p.u.as_tuple() for p in prims]
    rates = [_rate(problem.cost, p.u) for p in prims]
    x0 = (problem.x_hat.x1, problem.x_hat.x2, problem.x_hat.x3)
    target = (problem.x_star.x1, problem.x_star.x2, problem.x_star.x3)
    out = _solve_sequence(
        x0, target, controls, rates, problem.horizon,
        _sequence_seed(seed, seq), hint=hint,
    )
    if out is None:
        return None
    val, taus = out
    return (val, rank, seq, taus)


def _solve_worker(args) -> Optional[tuple[float, int, tuple[int, ...], tuple[float, ...]]]:
    problem, library, seq, rank, seed, hint = args
    return _candidate_entry(problem, library, seq, rank, seed, hint)


def solve(
    problem: ProblemSpec,
    delta: Optional[float] = None,
    threads: Optional[int] = None,
    seed: int = 0,
    hint_plan: Optional[TrimPlan] = None,
) -> OcpSolution:
    """Solve the trim-sequence optimal control problem.

    delta feeds the tie-break integral (ties in value break toward the
    plan with the larger running cost over [0, delta], then toward the
    lower sequence rank); when omitted it defaults to the shortest
    leading segment among the tied plans.  hint_plan warm-starts its own
    id sequence and seeds the pruning bound; threads > 1 distributes
    sequences over a process pool with a deterministic reduction.
    """
    library = _materialize(problem)
    _require_stage_cost(problem)
    fast = _fast_path(problem, library)
    if fast is not None:
        return fast

    n_workers = resolve_threads(threads)
    x0 = (problem.x_hat.x1, problem.x_hat.x2, problem.x_hat.x3)
    target = (problem.x_star.x1, problem.x_star.x2, problem.x_star.x3)
    fixed_time = problem.horizon is not None

    pairs = canonical_sequences(library.ids(), problem.max_segments)
    rate_by_id = {t: _rate(problem.cost, library.get(t).u) for t in library.ids()}
    u2_by_id = {t: library.get(t).u.u2 for t in library.ids()}
    dtheta = target[2] - x0[2]

    hint_ids: Optional[tuple[int, ...]] = None
    hint_taus: Optional[tuple[float, ...]] = None
    upper = math.inf
    if hint_plan is not None:
        canon = hint_plan.canonical()
        hint_ids = canon.ids()
        hint_taus = tuple(tau for _, tau in canon.segments)
        res = _residual(
            x0, target, [p.u.as_tuple() for p, _ in canon.segments],
            np.asarray(hint_taus),
        )
        total_ok = (
            problem.horizon is None
            or abs(canon.duration - problem.horizon) <= ENDPOINT_TOL
        )
        if float(np.linalg.norm(res)) <= ENDPOINT_TOL and total_ok:
            upper = sum(
                tau * _rate(problem.cost, p.u) for p, tau in canon.segments
            )

    jobs: list[tuple[tuple[int, ...], int, Optional[tuple[float, ...]], float]] = []
    for seq, rank in pairs:
        if not _heading_reachable(
            dtheta,
            problem.horizon if fixed_time else 0.0,
            [u2_by_id[t] for t in seq],
            fixed_time,
        ):
            continue
        hint = hint_taus if (hint_ids is not None and seq == hint_ids) else None
        # For a fixed horizon the value is at least T * (cheapest rate in
        # the sequence); sequences that cannot beat or tie the incumbent
        # are skipped.
        lb = (
            problem.horizon * min(rate_by_id[t] for t in seq)
            if fixed_time
            else 0.0
        )
        jobs.append((seq, rank, hint, lb))
    jobs.sort(key=lambda j: (j[3], j[1]))

    candidates: list[tuple[float, int, tuple[int, ...], tuple[float, ...]]] = []
    if n_workers == 1:
        best = upper
        for seq, rank, hint, lb in jobs:
            if lb > best + TIE_TOL:
                continue
            entry = _candidate_entry(problem, library, seq, rank, seed, hint)
            if entry is not None:
                candidates.append(entry)
                best = min(best, entry[0])
    else:
        runnable = [
            (problem, library, seq, rank, seed, hint)
            for seq, rank, hint, lb in jobs
            if lb <= upper + TIE_TOL
        ]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for entry in pool.map(_solve_worker, runnable, chunksize=8):
                if entry is not None:
                    candidates.append(entry)

    if problem.state_box is not None:
        candidates = [
            c
            for c in candidates
            if _box_ok(problem, _plan_from(library, c[2], c[3]))
        ]
    if not candidates:
        raise InfeasibleProblem(
            "no trim sequence reaches the target under the given horizon, "
            "segment budget and state box"
        )

    # Re-polish everything close to the front so that analytically tied
    # sequences agree to well within TIE_TOL before ties are grouped.
    raw_best = min(c[0] for c in candidates)
    window = 1e-4 * max(1.0, abs(raw_best))
    for k, (val, rank, seq, taus) in enumerate(candidates):
        if val <= raw_best + window:
            controls = [library.get(t).u.as_tuple() for t in seq]
            rates = [rate_by_id[t] for t in seq]
            val2, taus2 = _kkt_polish(
                x0, target, controls, rates, problem.horizon, taus, val
            )
            candidates[k] = (val2, rank, seq, taus2)

    best_val = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= best_val + TIE_TOL]
    if len(tied) > 1:
        plans = {c[1]: _plan_from(library, c[2], c[3]) for c in tied}
        if delta is None:
            window = min(
                next((tau for _, tau in plans[c[1]].segments if tau > 0.0), 0.0)
                for c in tied
            )
        else:
            window = delta
        tied.sort(
            key=lambda c: (
                -_integral_prefix(plans[c[1]], problem.cost, window),
                c[1],
            )
        )
    cand = tied[0]
    plan = _plan_from(library, cand[2], cand[3]).canonical()
    t_star = problem.horizon if fixed_time else plan.duration
    return OcpSolution(
        plan=plan,
        value=cand[0],
        t_star=float(t_star),
        sequence=plan.ids(),
        sequence_rank=cand[1],
    )


def _plan_from(
    library: TrimLibrary, seq: tuple[int, ...], taus: tuple[float, ...]
) -> TrimPlan:
    return TrimPlan(tuple((library.get(t), tau) for t, tau in zip(seq, taus)))


def value(problem: ProblemSpec, **kwargs) -> float:
    """Optimal value of the problem; see solve for keyword arguments."""
    return solve(problem, **kwargs).value
