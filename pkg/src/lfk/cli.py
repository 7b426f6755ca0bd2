"""Command-line entry point: check, run, translate, diff, shift-desugar.

Exit status 0 on success, 1 on type or evaluation errors, 2 on usage
errors.  Machine-readable output goes to stdout as UTF-8; --json
switches the check/diff reports to JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import cps, eval as ev, harness
from .finegrained import PureJudgment, fg_check, run_selective, selective_cps
from .relations import TrailSolverBudget
from .syntax import ParseError, desugar, parse, print_expr
from .typecheck import TypeCheckError, infer

DEFAULT_UNCHECKED_FUEL = 1_000_000


def _load(path: str, allow_shift: bool = False):
    text = Path(path).read_text(encoding="utf-8")
    return desugar(parse(text, allow_shift=allow_shift))


def _type_error(err: TypeCheckError, as_json: bool) -> int:
    if as_json:
        print(json.dumps(err.as_json()))
    else:
        print(f"type error: {err}", file=sys.stderr)
    return 1


def cmd_check(args) -> int:
    e = _load(args.file)
    try:
        if args.system == "fine-grained":
            _, result = fg_check({}, e)
        else:
            result, _ = infer({}, e)
    except TypeCheckError as err:
        return _type_error(err, args.json)
    if args.json:
        print(json.dumps(result.as_json()))
    else:
        print(str(result))
    return 0


def _accepted(e) -> bool:
    try:
        infer({}, e)
        return True
    except TypeCheckError:
        return False


def cmd_run(args) -> int:
    e = _load(args.file)
    fuel = args.fuel
    if fuel is None and not _accepted(e):
        fuel = DEFAULT_UNCHECKED_FUEL
    if args.via == "direct":
        trace = (lambda t: print(print_expr(t))) if args.trace else None
        out = ev.evaluate(e, fuel=fuel, trace=trace)
        match out:
            case ev.EvalResult(v, _):
                print(ev.print_value(v))
                return 0
            case ev.EvalStuck(reason, redex, _):
                print(f"stuck: {reason}: {print_expr(redex)}", file=sys.stderr)
                return 1
            case ev.EvalFuelExhausted(steps):
                print(f"fuel exhausted after {steps} steps", file=sys.stderr)
                return 1
        return 1
    if args.via == "cps":
        out = cps.run_cps(e, fuel=fuel)
    else:
        try:
            out = run_selective(e, fuel=fuel)
        except TypeCheckError:
            try:
                _, elab = infer({}, e)
            except TypeCheckError as err:
                return _type_error(err, False)
            out = run_selective(elab.expr, fuel=fuel)
    match out:
        case cps.CEvalResult(v, _):
            print(cps.print_cvalue(v))
            return 0
        case cps.CEvalStuck(reason, _, _):
            print(f"stuck: {reason}", file=sys.stderr)
            return 1
        case cps.CEvalFuelExhausted(steps):
            print(f"fuel exhausted after {steps} steps", file=sys.stderr)
            return 1
    return 1


def cmd_translate(args) -> int:
    e = _load(args.file)
    if args.mode == "full":
        try:
            _, elab = infer({}, e)
            image = cps.cps_expr_typed(elab.tree)
        except TypeCheckError:
            image = cps.cps_expr(e)
    else:
        try:
            deriv, _ = fg_check({}, e)
        except TypeCheckError as err:
            try:
                _, elab = infer({}, e)
                deriv, _ = fg_check({}, elab.expr)
            except TypeCheckError:
                return _type_error(err, args.json)
        image = selective_cps(deriv)
    print(cps.print_cexpr(image))
    print(f"size {cps.csize(image)}")
    return 0


def _print_report(report, as_json: bool):
    if as_json:
        print(json.dumps(report.as_json()))
    else:
        print(
            f"{report.program}: {report.verdict}"
            f" direct={report.direct} cps={report.full_cps} selective={report.selective}"
            f" steps={report.steps} sizes={report.sizes}"
        )


def cmd_diff(args) -> int:
    if args.enumerate is not None:
        goals = ["int", "bool", "string"] if args.goal == "all" else [args.goal]
        bad = 0
        total = 0
        for goal in goals:
            for expr, _j, _elab in harness.enumerate_programs(args.enumerate, goal):
                report = harness.diff_test(expr, name=print_expr(expr), watchdog=args.watchdog)
                total += 1
                if report.verdict != "Agree":
                    bad += 1
                    _print_report(report, args.json)
                elif args.verbose:
                    _print_report(report, args.json)
        print(f"{total} programs, {bad} disagreements")
        return 0 if bad == 0 else 1
    if args.file is None:
        print("diff requires a file or --enumerate", file=sys.stderr)
        return 2
    e = _load(args.file)
    try:
        report = harness.diff_test(e, name=args.file, watchdog=args.watchdog)
    except TypeCheckError as err:
        return _type_error(err, args.json)
    _print_report(report, args.json)
    return 0 if report.verdict == "Agree" else 1


def cmd_shift_desugar(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    e = parse(text, allow_shift=True, simplified_shift=args.simplified)
    print(print_expr(e))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="type-check a program and print its judgment")
    c.add_argument("file")
    c.add_argument("--system", choices=["original", "fine-grained"], default="original")
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_check)

    r = sub.add_parser("run", help="evaluate a program")
    r.add_argument("file")
    r.add_argument("--via", choices=["direct", "cps", "selective"], default="direct")
    r.add_argument("--trace", action="store_true", help="print each intermediate term (direct)")
    r.add_argument("--fuel", type=int, default=None)
    r.set_defaults(fn=cmd_run)

    t = sub.add_parser("translate", help="print the CPS image and its size")
    t.add_argument("file")
    t.add_argument("--mode", choices=["full", "selective"], default="full")
    t.add_argument("--json", action="store_true")
    t.set_defaults(fn=cmd_translate)

    d = sub.add_parser("diff", help="differential run: direct vs cps vs selective")
    d.add_argument("file", nargs="?")
    d.add_argument("--enumerate", type=int, default=None, metavar="SIZE")
    d.add_argument("--goal", choices=["int", "bool", "string", "all"], default="int")
    d.add_argument("--watchdog", type=float, default=harness.DEFAULT_WATCHDOG)
    d.add_argument("--depth", type=int, default=TrailSolverBudget().max_depth,
                   help="trail solver budget (reserved)")
    d.add_argument("--verbose", action="store_true")
    d.add_argument("--json", action="store_true")
    d.set_defaults(fn=cmd_diff)

    s = sub.add_parser("shift-desugar", help="expand shift forms into control/prompt")
    s.add_argument("file")
    s.add_argument("--simplified", action="store_true")
    s.set_defaults(fn=cmd_shift_desugar)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as err:
        print(f"syntax error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
