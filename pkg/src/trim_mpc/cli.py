"""Command-line front end.

Subcommands: solve, mpc, verify, library, transcribe.  All numeric JSON
output is printed with 17 significant digits and CSV with 12, so reruns
with identical inputs and seed are byte-identical.  Exit codes: 0 ok,
1 input error, 2 infeasible problem, 3 verification failure.

CSV column orders:
  trajectory.csv  t,x1,x2,x3,u1,u2
  trace.csv       t,x1,x2,x3,u1,u2,V,cost,replanned
  transcription   t,x1,x2,x3,x4,x5,u1,u2
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .costs import ProblemSpec, ProblemSpecError, problem_from_json
from .mpc import MpcConfig, MpcTrace, run
from .ocp import InfeasibleProblem, resolve_threads, solve
from .symmetry import State
from .trims import TrimLibrary, default_library, plan_flow
from .verification import SUITES, run_suite

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_VERIFICATION = 3


class _CliError(Exception):
    """Input problem; maps to exit code 1 with the message on stderr."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; we use 1
        raise _CliError(message)


# ---------------------------------------------------------------------------
# Deterministic serialization


def _fmt_float(v: float) -> str:
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value in output: {v!r}")
    return format(v, ".17g")


def _dump_json(obj, indent: int = 0) -> str:
    pad = " " * indent
    inner = " " * (indent + 2)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_dump_json(v, indent + 2) for v in obj]
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_dump_json(v, indent + 2)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(_dump_json(obj) + "\n")


def _csv_row(values) -> str:
    return ",".join(f"{v:.12g}" for v in values)


# ---------------------------------------------------------------------------
# Run manifest


@dataclass(frozen=True)
class RunManifest:
    """Record of one invocation.

    Everything except wall_time_s is deterministic; the data outputs it
    points to are byte-identical across reruns with the same inputs.
    """

    command: str
    input_path: Optional[str]
    output_paths: list[str]
    seed: int
    version: str
    wall_time_s: float

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "input": self.input_path,
            "outputs": self.output_paths,
            "seed": self.seed,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
        }


def _maybe_manifest(
    args, command: str, input_path: Optional[str], outputs: list[Path], t0: float
) -> None:
    if getattr(args, "manifest", None) is None:
        return
    manifest = RunManifest(
        command=command,
        input_path=input_path,
        output_paths=[str(p) for p in outputs],
        seed=getattr(args, "seed", 0),
        version=__version__,
        wall_time_s=time.monotonic() - t0,
    )
    _write_json(Path(args.manifest), manifest.as_dict())


# ---------------------------------------------------------------------------
# Shared helpers


def _load_problem(path: str) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise _CliError(f"cannot read {path}: {err}") from err
    try:
        return problem_from_json(text)
    except ProblemSpecError as err:
        raise _CliError(f"{path}: {err}") from err


def _plan_dict(plan) -> list[dict]:
    return [
        {"id": prim.trim_id, "u1": prim.u.u1, "u2": prim.u.u2, "tau": tau}
        for prim, tau in plan.segments
    ]


def _trace_csv(trace: MpcTrace) -> str:
    lines = ["t,x1,x2,x3,u1,u2,V,cost,replanned"]
    for s in trace.steps:
        lines.append(
            _csv_row(
                [
                    s.t,
                    s.state.x1,
                    s.state.x2,
                    s.state.x3,
                    s.control.u1,
                    s.control.u2,
                    s.value,
                    s.cumulative_cost,
                ]
            )
            + f",{int(s.replanned)}"
        )
    return "\n".join(lines) + "\n"


def _summary_dict(trace: MpcTrace) -> dict:
    motion = sum(1 for s in trace.steps if s.step_duration > 0.0)
    return {
        "terminated": trace.terminated,
        "steps": motion,
        "entries": len(trace.steps),
        "total_cost": trace.total_cost if trace.steps else 0.0,
        "final_state": list(trace.final_state.as_tuple()) if trace.steps else None,
        "values": trace.values(),
        "replanning_steps": trace.replanning_steps(),
    }


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_solve(args) -> int:
    t0 = time.monotonic()
    problem = _load_problem(args.problem)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        sol = solve(
            problem,
            threads=resolve_threads(args.threads),
            seed=args.seed,
        )
    except InfeasibleProblem as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    traj = plan_flow(problem.x_hat, sol.plan)
    solution_path = out_dir / "solution.json"
    trajectory_path = out_dir / "trajectory.csv"
    _write_json(
        solution_path,
        {
            "value": sol.value,
            "t_star": sol.t_star,
            "sequence": list(sol.sequence),
            "sequence_rank": sol.sequence_rank,
            "plan": _plan_dict(sol.plan),
            "endpoint": list(traj.endpoint.as_tuple()),
        },
    )
    rows = ["t,x1,x2,x3,u1,u2"]
    for t, x, u in traj.sample(args.sample_dt):
        rows.append(_csv_row([t, x.x1, x.x2, x.x3, u.u1, u.u2]))
    trajectory_path.write_text("\n".join(rows) + "\n")
    _maybe_manifest(
        args, "solve", args.problem, [solution_path, trajectory_path], t0
    )
    print(f"value {sol.value:.12g}  sequence {list(sol.sequence)}")
    return EXIT_OK


def _cmd_mpc(args) -> int:
    t0 = time.monotonic()
    problem = _load_problem(args.problem)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    summary_path = out_dir / "summary.json"
    if args.max_steps == 0:
        # Degenerate cap: no solve is attempted, the loop stalls at once.
        trace_path.write_text("t,x1,x2,x3,u1,u2,V,cost,replanned\n")
        _write_json(
            summary_path,
            {
                "terminated": "stalled",
                "steps": 0,
                "entries": 0,
                "total_cost": 0.0,
                "final_state": None,
                "values": [],
                "replanning_steps": [],
            },
        )
        _maybe_manifest(args, "mpc", args.problem, [trace_path, summary_path], t0)
        return EXIT_OK
    config = MpcConfig(
        delta=args.delta,
        stop_tol=args.stop_tol,
        max_steps=args.max_steps,
        seed=args.seed,
        threads=resolve_threads(args.threads),
    )
    try:
        trace = run(problem, config)
    except InfeasibleProblem as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    trace_path.write_text(_trace_csv(trace))
    _write_json(summary_path, _summary_dict(trace))
    _maybe_manifest(args, "mpc", args.problem, [trace_path, summary_path], t0)
    summary = _summary_dict(trace)
    print(
        f"{summary['terminated']} after {summary['steps']} steps, "
        f"cost {summary['total_cost']:.12g}"
    )
    return EXIT_OK


def _cmd_verify(args) -> int:
    t0 = time.monotonic()
    report = run_suite(args.suite, seed=args.seed)
    out_path = Path(args.output)
    _write_json(out_path, report)
    _maybe_manifest(args, "verify", None, [out_path], t0)
    if not report["passed"]:
        print(
            f"verification failed: {report['check']} "
            f"(worst margin {report['worst_margin']:.6g}); "
            f"witness: {json.dumps(report['witness'])}",
            file=sys.stderr,
        )
        return EXIT_VERIFICATION
    print(f"{report['check']}: pass (worst margin {report['worst_margin']:.6g})")
    return EXIT_OK


def _duplicate_controls(library: TrimLibrary) -> Optional[tuple[int, int]]:
    trims = library.trims()
    for i, a in enumerate(trims):
        for b in trims[i + 1 :]:
            if a.u.u1 == b.u.u1 and a.u.u2 == b.u.u2:
                return a.trim_id, b.trim_id
    return None


def _cmd_library(args) -> int:
    if args.emit:
        text = default_library().to_json() + "\n"
        if args.output == "-":
            sys.stdout.write(text)
        else:
            Path(args.output).write_text(text)
        return EXIT_OK
    try:
        text = Path(args.validate).read_text()
    except OSError as err:
        raise _CliError(f"cannot read {args.validate}: {err}") from err
    try:
        library = TrimLibrary.from_json(text)
    except ValueError as err:
        print(f"invalid library: {err}", file=sys.stderr)
        return EXIT_INPUT
    dup = _duplicate_controls(library)
    if dup is not None:
        print(
            f"invalid library: trims {dup[0]} and {dup[1]} share the same "
            "control value",
            file=sys.stderr,
        )
        return EXIT_INPUT
    print(f"ok: {len(library)} trims")
    return EXIT_OK


def _cmd_transcribe(args) -> int:
    from . import collocation

    t0 = time.monotonic()
    try:
        text = Path(args.problem).read_text()
    except OSError as err:
        raise _CliError(f"cannot read {args.problem}: {err}") from err
    try:
        problem = collocation.problem_from_dict(json.loads(text))
    except (ValueError, json.JSONDecodeError) as err:
        raise _CliError(f"{args.problem}: {err}") from err
    sol = collocation.solve_nlp(
        collocation.transcribe(problem), threads=resolve_threads(args.threads)
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "transcription.csv"
    summary_path = out_dir / "transcription.json"
    csv_path.write_text(sol.to_csv())
    _write_json(
        summary_path,
        {
            "objective": sol.objective,
            "residual": sol.residual,
            "gradient_norm": sol.gradient_norm,
            "iterations": sol.iterations,
            "converged": sol.converged,
        },
    )
    _maybe_manifest(args, "transcribe", args.problem, [csv_path, summary_path], t0)
    print(
        f"J {sol.objective:.12g}  residual {sol.residual:.3g}  "
        f"converged {sol.converged}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="trim-mpc", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem file")
    p.add_argument("problem", help="problem JSON path")
    p.add_argument("-o", "--out-dir", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument(
        "--sample-dt", type=float, default=0.01, help="trajectory CSV spacing"
    )
    p.add_argument("--manifest", default=None, help="write a run manifest here")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("mpc", help="run the closed loop on a problem file")
    p.add_argument("problem", help="problem JSON path")
    p.add_argument("--delta", type=float, required=True, help="sampling period")
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--stop-tol", type=float, default=1e-6)
    p.add_argument("-o", "--out-dir", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--manifest", default=None, help="write a run manifest here")
    p.set_defaults(fn=_cmd_mpc)

    p = sub.add_parser("verify", help="run a named verification suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="report.json")
    p.add_argument("--manifest", default=None, help="write a run manifest here")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("library", help="emit or validate a trim library")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--emit", action="store_true", help="write the default library")
    group.add_argument("--validate", metavar="FILE", help="check a library file")
    p.add_argument("-o", "--output", default="-", help="emit target (- for stdout)")
    p.set_defaults(fn=_cmd_library)

    p = sub.add_parser("transcribe", help="direct collocation on a problem file")
    p.add_argument("problem", help="collocation problem JSON path")
    p.add_argument("-o", "--out-dir", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--manifest", default=None, help="write a run manifest here")
    p.set_defaults(fn=_cmd_transcribe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ProblemSpecError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
