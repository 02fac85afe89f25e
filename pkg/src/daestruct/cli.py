"""Command-line front end.

Reports are JSON on stdout; failures print an error object on stderr and
exit with 2 (parse), 3 (structure), 4 (numerics) or 5 (verification).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .errors import DaeStructError, ParseError, VerificationMismatch
from .expr import Point, to_text
from .jacobian import (
    PIVOT_TOL,
    RESIDUAL_TOL,
    constant_drivers,
    evaluate_jacobian,
    nonsingularity_check,
    solve_consistent_point,
    system_jacobian,
)
from .language import Model, parse_model, parse_symbol
from .prolong import block_schedule, prolong
from .sigma import analyze
from .tanks import TankSpec, tank_model_text, verify_closed_forms

log = logging.getLogger("daestruct")


def _seed() -> int:
    raw = os.environ.get("DAESTRUCT_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"DAESTRUCT_SEED must be an integer, got {raw!r}")


def _load_model(path: str) -> Model:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _load_json(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: {err.msg}", err.lineno, err.colno) from err
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object", 1, 1)
    return data


def _load_assignments(path: str, model: Model) -> tuple[float, dict]:
    """Read ``{"t": ..., "x": 1.0, "der(x, 1)": 0.5, ...}`` into symbol keys."""
    data = _load_json(path)
    t = float(data.pop("t", 0.0))
    values = {}
    for key, value in data.items():
        if not isinstance(value, (int, float)):
            raise ParseError(f"{path}: value of {key!r} is not a number", 1, 1)
        values[parse_symbol(key, model)] = float(value)
    return t, values


def _emit(report: dict, out: str | None = None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_analyze(args) -> int:
    analysis = analyze(_load_model(args.model))
    _emit(analysis.to_json(), args.json)
    return 0


def cmd_prolong(args) -> int:
    model = _load_model(args.model)
    analysis = analyze(model)
    system = prolong(model, analysis.offsets)
    report = system.to_json()
    report["stages"] = [
        [to_text(system.symbol(j, m)) for j, m in stage] for stage in block_schedule(system).stages
    ]
    report["degrees_of_freedom"] = system.degrees_of_freedom
    _emit(report)
    return 0


def cmd_jacobian(args) -> int:
    model = _load_model(args.model)
    jac = system_jacobian(model, analyze(model).offsets)
    report = jac.to_json()
    if args.point:
        t, values = _load_assignments(args.point, model)
        point = Point(t, values)
        report["values"] = evaluate_jacobian(jac, point).tolist()
        report["check"] = nonsingularity_check(jac, point, args.tol).to_json()
    _emit(report)
    return 0


def cmd_consistent(args) -> int:
    model = _load_model(args.model)
    system = prolong(model, analyze(model).offsets)
    t, guesses = _load_assignments(args.guesses, model)
    free = _load_assignments(args.free, model)[1] if args.free else None
    if args.hold_inputs:
        # Missing input derivatives default to zero.
        base = {s.name: v for s, v in guesses.items() if s.order == 0 and s.name in model.drivers}
        for s, v in constant_drivers(system, base).items():
            guesses.setdefault(s, v)
    result = solve_consistent_point(system, Point(t, guesses), free, tol=args.tol)
    _emit(result.to_json())
    return 0


def cmd_tankgen(args) -> int:
    text = tank_model_text(TankSpec(args.k, args.case))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    checks = verify_closed_forms(args.k_max, seed=_seed())
    failed = [c for c in checks if not c.passed]
    _emit({"k_max": args.k_max, "passed": not failed, "checks": [c.to_json() for c in checks]})
    if failed:
        names = ", ".join(f"{c.name}(k={c.k})" for c in failed)
        raise VerificationMismatch(f"{len(failed)} check(s) failed: {names}")
    return 0


def cmd_bench(args) -> int:
    records = bench.run_benchmark(
        bench.k_range(args.k_min, args.k_max, args.step),
        memory=not args.no_memory,
        parallel=args.parallel,
    )
    text = bench.to_csv(records, parallel=bool(args.parallel))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daestruct", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="signature matrix, transversal, offsets, index")
    p.add_argument("model")
    p.add_argument("--json", metavar="OUT", help="also write the report to OUT")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("prolong", help="differentiated system and block schedule")
    p.add_argument("model")
    p.set_defaults(func=cmd_prolong)

    p = sub.add_parser("jacobian", help="system Jacobian, optionally evaluated")
    p.add_argument("model")
    p.add_argument("--point", help="JSON object mapping symbols (and t) to values")
    p.add_argument("--tol", type=float, default=PIVOT_TOL, help="relative pivot tolerance")
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("consistent", help="solve for a consistent initial point")
    p.add_argument("model")
    p.add_argument("--guesses", required=True, help="JSON object of starting values")
    p.add_argument("--free", help="JSON object of values for free variables")
    p.add_argument("--tol", type=float, default=RESIDUAL_TOL)
    p.add_argument(
        "--hold-inputs",
        action="store_true",
        help="treat inputs as constant: unspecified input derivatives are zero",
    )
    p.set_defaults(func=cmd_consistent)

    p = sub.add_parser("tankgen", help="write the k-tank cascade model")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--case", choices=("a", "b"), default="b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tankgen)

    p = sub.add_parser("verify", help="check tank closed forms for k = 1..K")
    p.add_argument("--k-max", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time the pipeline over a range of k, CSV out")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=50)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--parallel", type=int, metavar="WORKERS", help="run k values concurrently")
    p.add_argument("--no-memory", action="store_true", help="skip the traced-allocation pass")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DaeStructError as err:
        print(json.dumps(err.to_json()), file=sys.stderr)
        return err.exit_code
    except (OSError, ValueError) as err:
        print(json.dumps({"error": "invalid_input", "message": str(err)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
