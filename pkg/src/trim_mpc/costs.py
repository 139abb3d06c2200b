"""Stage costs, tracking costs, and the optimal control problem container.

The running-cost family

    rate(x, u) = c1 * u' R u + c2 * |u|_k + c3

is deliberately state independent, which makes it invariant under the
symmetry action and lets problems be transported to the origin without
changing their value.  TrackingCost exists as the standard counterexample:
its explicit state dependence breaks invariance.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Union

from .robot import ControlValue
from .symmetry import GroupElement, State, act, wrap_angle
from .trims import TrimLibrary

Matrix2 = tuple[tuple[float, float], tuple[float, float]]
Matrix3 = tuple[tuple[float, float, float], ...]

NORM_KINDS = ("l1", "l2", "linf")

_SYM_TOL = 1e-12


def _check_spd2(R: Matrix2) -> None:
    (a, b), (c, d) = R
    if abs(b - c) > _SYM_TOL * max(1.0, abs(b), abs(c)):
        raise ValueError(f"R must be symmetric, got {R!r}")
    if not (a > 0.0 and a * d - b * c > 0.0):
        raise ValueError(f"R must be positive definite, got {R!r}")


def control_norm(u: ControlValue, kind: str) -> float:
    if kind == "l1":
        return abs(u.u1) + abs(u.u2)
    if kind == "l2":
        return math.hypot(u.u1, u.u2)
    if kind == "linf":
        return max(abs(u.u1), abs(u.u2))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


@dataclass(frozen=True)
class StageCost:
    """rate(x, u) = c1 * u' R u + c2 * |u|_norm_kind + c3, with c1, c2, c3 >= 0."""

    c1: float = 1.0
    R: Matrix2 = ((1.0, 0.0), (0.0, 1.0))
    c2: float = 0.0
    norm_kind: str = "l2"
    c3: float = 0.0

    def __post_init__(self) -> None:
        if self.c1 < 0.0 or self.c2 < 0.0 or self.c3 < 0.0:
            raise ValueError("cost weights c1, c2, c3 must be >= 0")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        _check_spd2(self.R)

    def quad(self, u: ControlValue) -> float:
        """u' R u."""
        (a, b), (_, d) = self.R
        return a * u.u1 * u.u1 + 2.0 * b * u.u1 * u.u2 + d * u.u2 * u.u2

    def norm_r(self, u: ControlValue) -> float:
        """|u|_R = sqrt(u' R u)."""
        return math.sqrt(self.quad(u))

    def rate(self, x: State, u: ControlValue) -> float:
        return self.c1 * self.quad(u) + self.c2 * control_norm(u, self.norm_kind) + self.c3

    def lambda_min(self) -> float:
        """Smallest eigenvalue of R."""
        (a, b), (_, d) = self.R
        h = 0.5 * (a + d)
        return h - math.sqrt(max(0.25 * (a - d) ** 2 + b * b, 0.0))


@dataclass(frozen=True)
class TrackingCost:
    """Quadratic tracking error (x - x_ref)' Q (x - x_ref) + (u - u_ref)' R (u - u_ref).

    Heading error uses the raw coordinate difference.  This cost is not
    invariant under the symmetry action; see check_invariance.
    """

    Q: Matrix3
    R: Matrix2
    x_ref: State
    u_ref: ControlValue

    def __post_init__(self) -> None:
        _check_spd2(self.R)
        q = self.Q
        if len(q) != 3 or any(len(row) != 3 for row in q):
            raise ValueError("Q must be 3x3")
        for i in range(3):
            for j in range(3):
                if abs(q[i][j] - q[j][i]) > _SYM_TOL * max(1.0, abs(q[i][j])):
                    raise ValueError("Q must be symmetric")

    def rate(self, x: State, u: ControlValue) -> float:
        e = (x.x1 - self.x_ref.x1, x.x2 - self.x_ref.x2, x.x3 - self.x_ref.x3)
        quad_x = sum(self.Q[i][j] * e[i] * e[j] for i in range(3) for j in range(3))
        du = (u.u1 - self.u_ref.u1, u.u2 - self.u_ref.u2)
        (a, b), (_, d) = self.R
        quad_u = a * du[0] * du[0] + 2.0 * b * du[0] * du[1] + d * du[1] * du[1]
        return quad_x + quad_u


def check_invariance(
    fn: Callable[[State, ControlValue], float],
    samples: Iterable[tuple[GroupElement, State, ControlValue]],
) -> float:
    """max |fn(act(g, x), u) - fn(x, u)| over the samples."""
    worst = 0.0
    for g, x, u in samples:
        worst = max(worst, abs(fn(act(g, x), u) - fn(x, u)))
    return worst


Box = tuple[
    tuple[Optional[float], Optional[float]],
    tuple[Optional[float], Optional[float]],
    tuple[Optional[float], Optional[float]],
]


def box_contains(box: Box, x: State, tol: float = 0.0) -> bool:
    for (lo, hi), v in zip(box, x.as_tuple()):
        if lo is not None and v < lo - tol:
            return False
        if hi is not None and v > hi + tol:
            return False
    return True


@dataclass(frozen=True)
class ProblemSpec:
    """One optimal control problem over trim concatenations.

    horizon: fixed duration T, or None for free final time (requires
    c3 > 0 so that time is penalized).
    control_set: a TrimLibrary or a GridControlSet from the ocp module.
    state_box: optional per-coordinate bounds, None entries unbounded.
    """

    x_hat: State
    x_star: State
    cost: StageCost
    control_set: Union[TrimLibrary, "object"]
    horizon: Optional[float] = None
    max_segments: int = 4
    state_box: Optional[Box] = None

    def __post_init__(self) -> None:
        if self.horizon is not None and not (
            math.isfinite(self.horizon) and self.horizon > 0.0
        ):
            raise ValueError(f"horizon must be > 0 or None, got {self.horizon!r}")
        if self.horizon is None and self.cost.c3 <= 0.0:
            raise ValueError("free final time requires c3 > 0")
        if self.max_segments < 1:
            raise ValueError(f"max_segments must be >= 1, got {self.max_segments}")


def _box_invariant_under(box: Box, g: GroupElement) -> bool:
    # Rotations move any finite box unless the angle is a multiple of 2*pi;
    # they also shift the heading axis.  Translations move the box along
    # every finitely-bounded axis.
    if abs(wrap_angle(g.dtheta)) > 1e-12:
        return all(lo is None and hi is None for lo, hi in box)
    shift = (g.dx1, g.dx2, g.dx3)
    for (lo, hi), d in zip(box, shift):
        if (lo is not None or hi is not None) and abs(d) > 1e-12:
            return False
    return True


def shift_problem(g: GroupElement, p: ProblemSpec) -> ProblemSpec:
    """Transport a problem along the group action.

    Both anchor states move by act(g, .); the stage cost and control set
    are invariant and carried over unchanged.  A state box that g does
    not map onto itself cannot be transported inside the box family, so
    it is dropped with a warning.
    """
    box = p.state_box
    if box is not None and not _box_invariant_under(box, g):
        warnings.warn(
            "state box is not invariant under the group element; dropping it",
            RuntimeWarning,
            stacklevel=2,
        )
        box = None
    return replace(p, x_hat=act(g, p.x_hat), x_star=act(g, p.x_star), state_box=box)


# --- JSON round trip -------------------------------------------------------

def _cost_to_dict(c: StageCost) -> dict:
    return {
        "c1": c.c1,
        "R": [list(row) for row in c.R],
        "c2": c.c2,
        "norm": c.norm_kind,
        "c3": c.c3,
    }


def _cost_from_dict(d: dict) -> StageCost:
    R = d.get("R", [[1.0, 0.0], [0.0, 1.0]])
    return StageCost(
        c1=float(d.get("c1", 1.0)),
        R=((float(R[0][0]), float(R[0][1])), (float(R[1][0]), float(R[1][1]))),
        c2=float(d.get("c2", 0.0)),
        norm_kind=str(d.get("norm", "l2")),
        c3=float(d.get("c3", 0.0)),
    )


def problem_to_json(p: ProblemSpec) -> str:
    from .ocp import GridControlSet

    if isinstance(p.control_set, GridControlSet):
        cs = {
            "kind": "grid",
            "u1_max": p.control_set.u1_max,
            "u2_max": p.control_set.u2_max,
            "du": p.control_set.du,
        }
    elif isinstance(p.control_set, TrimLibrary):
        cs = {
            "kind": "library",
            "trims": json.loads(p.control_set.to_json())["trims"],
        }
    else:
        raise TypeError(f"unsupported control set {type(p.control_set).__name__}")
    data = {
        "x_hat": list(p.x_hat.as_tuple()),
        "x_star": list(p.x_star.as_tuple()),
        "horizon": p.horizon if p.horizon is not None else "free",
        "max_segments": p.max_segments,
        "control_set": cs,
        "state_box": [list(side) for side in p.state_box] if p.state_box else None,
        "cost": _cost_to_dict(p.cost),
    }
    return json.dumps(data, indent=2, allow_nan=False)


def problem_from_json(text: str) -> ProblemSpec:
    from .ocp import GridControlSet

    try:
        data = json.loads(text)
        xh = data["x_hat"]
        xs = data["x_star"]
        horizon = data["horizon"]
        cs_data = data["control_set"]
        if cs_data["kind"] == "grid":
            control_set: Union[TrimLibrary, GridControlSet] = GridControlSet(
                float(cs_data["u1_max"]), float(cs_data["u2_max"]), float(cs_data["du"])
            )
        elif cs_data["kind"] == "library":
            control_set = TrimLibrary.from_json(json.dumps({"trims": cs_data["trims"]}))
        else:
            raise ValueError(f"unknown control set kind {cs_data['kind']!r}")
        box_data = data.get("state_box")
        box: Optional[Box] = None
        if box_data is not None:
            box = tuple(
                (None if lo is None else float(lo), None if hi is None else float(hi))
                for lo, hi in box_data
            )  # type: ignore[assignment]
        return ProblemSpec(
            x_hat=State(*map(float, xh)),
            x_star=State(*map(float, xs)),
            cost=_cost_from_dict(data["cost"]),
            control_set=control_set,
            horizon=None if horizon == "free" else float(horizon),
            max_segments=int(data.get("max_segments", 4)),
            state_box=box,
        )
    except ProblemSpecError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
        raise ProblemSpecError(f"malformed problem: {err}") from err


class ProblemSpecError(ValueError):
    """Raised when a problem description cannot be parsed or validated."""
