"""Command-line front end.

    beamfcs run scenario.json --out results/ [--seed N] [--threads N]
    beamfcs selfcheck [--filter NAME]

Exit codes: 0 success, 1 failed selfcheck, 2 invalid input, 3 numerical
failure.  Errors are reported as one JSON object on standard error.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .errors import NumericalError, ValidationError

EXIT_OK, EXIT_SELFCHECK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("need a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--threads", type=_positive, default=argparse.SUPPRESS,
                        help="worker threads for parameter sweeps (default 1)")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS,
                        help="override the scenario seed")
    p = argparse.ArgumentParser(prog="beamfcs", parents=[common],
                                description="Counting statistics of quasi-free particle beams.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a scenario file")
    r.add_argument("scenario", type=Path)
    r.add_argument("--out", type=Path, required=True, help="output directory")
    s = sub.add_parser("selfcheck", parents=[common], help="run the invariant suite")
    s.add_argument("--filter", default=None, help="only checks whose name contains this text")
    return p


def _report(exc: Exception, code: int, **context) -> int:
    kind = "validation" if code == EXIT_VALIDATION else "numerical" if code == EXIT_NUMERICAL else "internal"
    doc = {"error": type(exc).__name__, "kind": kind, "message": str(exc), "exit_code": code, **context}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    from . import scenario

    ctx = {"scenario": str(args.scenario)}
    try:
        doc = scenario.load(args.scenario)
        summary = scenario.run(doc, args.out, base=args.scenario.parent,
                               seed=getattr(args, "seed", None), threads=getattr(args, "threads", 1))
    except ValidationError as exc:
        return _report(exc, EXIT_VALIDATION, **ctx)
    except NumericalError as exc:
        return _report(exc, EXIT_NUMERICAL, **ctx)
    except FileNotFoundError as exc:
        return _report(exc, EXIT_VALIDATION, **ctx)
    print(json.dumps({"out": str(args.out), "scenario_hash": summary["scenario_hash"]}))
    return EXIT_OK


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_checks

    ok, results, digest = run_checks(args.filter)
    if not results:
        return _report(ValidationError(f"no check matches {args.filter!r}"), EXIT_VALIDATION)
    n_fail = sum(not o for _, o, _ in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed; report hash {digest}")
    return EXIT_OK if ok else EXIT_SELFCHECK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_selfcheck(args)
    except Exception as exc:  # unexpected: keep the JSON contract, keep the trace
        traceback.print_exc()
        return _report(exc, EXIT_NUMERICAL if isinstance(exc, ArithmeticError) else EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
