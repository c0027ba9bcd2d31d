"""Command line: ``rbsde-lab {run,sweep,check,list}``.

Exit status is 0 iff every requested assertion passes; a failing run prints
one line naming the first failed check.  Config problems exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import reports, scenarios, suites
from .filtration import CountExceeded
from .rbsde import (BarrierCrossing, GeneratorDeclarationError, NoConvergence,
                    RootBracketFailure, StepSizeTooLarge)

SOLVER_ERRORS = (StepSizeTooLarge, RootBracketFailure, BarrierCrossing, NoConvergence,
                 GeneratorDeclarationError, CountExceeded)


def _out_dir(args, cfg_name, source):
    if args.out:
        return Path(args.out)
    try:
        cfg = scenarios.load_config(source)
    except scenarios.ConfigError:
        cfg = {}
    return Path(cfg.get("output") or Path("reports") / cfg_name)


def _finish(result, out, quiet):
    paths = scenarios.write_outputs(result, out)
    if not quiet:
        for p in paths:
            print(f"wrote {p}")
    bad = result.failures()
    if bad:
        name, value, thr, _ = bad[0]
        print(f"FAIL {result.name}: {name} = {reports.fmt(value)} (threshold "
              f"{reports.fmt(thr)}); {len(bad)} failing check(s)")
        return 1
    print(f"OK {result.name}: {len(result.checks)} check(s) passed")
    return 0


def cmd_run(args):
    res = scenarios.run(args.config)
    return _finish(res, _out_dir(args, res.name, args.config), args.quiet)


def cmd_sweep(args):
    res = scenarios.sweep(args.config)
    return _finish(res, _out_dir(args, res.name, args.config), args.quiet)


def cmd_check(args):
    rows = suites.run_suite(args.suite, args.seed, args.instances)
    text = reports.suite_csv(rows)
    if args.out:
        reports.write(args.out, text)
    if not args.quiet:
        sys.stdout.write(text)
    bad = [r for r in rows if not r.passed]
    if bad:
        print(f"FAIL {args.suite}: {bad[0].check} worst = {reports.fmt(bad[0].worst)}; "
              f"{len(bad)} failing check(s)")
        return 1
    print(f"OK {args.suite}: {len(rows)} check(s) passed")
    return 0


def cmd_list(args):
    for name in scenarios.list_scenarios():
        print(name)
    return 0


def parser():
    p = argparse.ArgumentParser(prog="rbsde-lab",
                                description="Reflected backward equations on finite trees.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a scenario and run its checks")
    r.add_argument("config", help="registered scenario name or JSON file")
    r.add_argument("--out", help="output directory (default: config 'output' or reports/<name>)")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="penalization sweep of a scenario")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="run a randomized property suite")
    c.add_argument("suite", help=f"one of {', '.join(list(suites.SUITES) + ['all'])}")
    c.add_argument("--seed", type=int, default=suites.DEFAULT_SEED)
    c.add_argument("--instances", type=int, default=None,
                   help="instance count (default: the suite's own)")
    c.add_argument("--out", help="write the suite report CSV here")
    c.add_argument("-q", "--quiet", action="store_true")
    c.set_defaults(func=cmd_check)

    ls = sub.add_parser("list", help="list registered scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except scenarios.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return 2
    except SOLVER_ERRORS as e:
        where = getattr(args, "config", None) or getattr(args, "suite", "")
        print(f"error in {where}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
