"""Command-line entry points: run, check and poset.

Exit codes for ``run``: 0 when a branch completed (horizon, Zeno or a
configured limit), 2 when every branch ended without a solution, 3 on a
parse error or malformed input file, 4 on unsupported or underdetermined
programs.  ``check`` exits 0 on accept and 1 on reject.
"""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from .ast import HydlaError
from .checker import verify
from .simulator import (BRANCH_LIMIT, HORIZON, NO_SOLUTION, PHASE_LIMIT, ZENO, SimOptions,
                        inject_continuity_defaults, simulate)
from .syntax import ParseError
from .traceio import (TraceFormatError, certificate_from_document, dumps, emit_csv, load_program,
                      loads, make_document)

EXIT_OK, EXIT_REJECT, EXIT_NO_SOLUTION, EXIT_INPUT, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hydla", description="Basic HydLa simulator and checker")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a program")
    run.add_argument("file")
    run.add_argument("--until", type=_rational, default=Fraction(10), help="time horizon")
    run.add_argument("--max-phases", type=int, default=200)
    run.add_argument("--branch-limit", type=int, default=16)
    run.add_argument("--zeno-window", type=int, default=4)
    run.add_argument("--zeno-tol", type=_rational, default=Fraction(1, 1000))
    run.add_argument("--post-zeno", action="store_true",
                     help="continue past a detected Zeno point using extrapolated limits")
    run.add_argument("--explicit-poset", help="JSON module-set poset (default: <file stem>.poset.json)")
    run.add_argument("--no-continuity", action="store_true", help="do not add continuity defaults")
    run.add_argument("--exclude-default", action="append", default=[], metavar="NAME",
                     help="drop one generated continuity module, e.g. 'CONT(b,0)'")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--step", type=_rational, default=Fraction(1, 10), help="CSV sampling step")
    run.add_argument("--precision", type=int, default=6, help="CSV decimal places")
    run.add_argument("--out", help="output path (default: standard output)")

    chk = sub.add_parser("check", help="verify a trace or certificate against a program")
    chk.add_argument("file")
    chk.add_argument("--certificate", required=True)
    chk.add_argument("--branch", type=int, default=0)
    chk.add_argument("--explicit-poset")

    pos = sub.add_parser("poset", help="list the module-set poset")
    pos.add_argument("file")
    pos.add_argument("--explicit-poset")
    pos.add_argument("--with-defaults", action="store_true", help="include continuity defaults")
    return ap


def _write(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _input_error(exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


def cmd_run(args) -> int:
    try:
        prog = load_program(args.file, args.explicit_poset)
        opts = SimOptions(args.until, args.max_phases, args.branch_limit, args.zeno_window,
                          args.zeno_tol, args.post_zeno, tuple(args.exclude_default))
    except (ParseError, OSError) as exc:
        return _input_error(f"{args.file}: {exc}")
    except HydlaError as exc:
        return _input_error(exc)
    try:
        if not args.no_continuity:
            prog = inject_continuity_defaults(prog, opts.exclude_defaults)
        traces = simulate(prog, opts)
    except HydlaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    if args.format == "json":
        _write(dumps(make_document(prog, traces, opts, not args.no_continuity)), args.out)
    else:
        _write(emit_csv(traces, args.step, args.precision), args.out)
    statuses = [t.status for t in traces]
    for i, t in enumerate(traces):
        if t.diagnostic:
            msg = t.diagnostic if t.diagnostic.startswith(t.status) else f"{t.status}: {t.diagnostic}"
            print(f"branch {i}: {msg}", file=sys.stderr)
    if any(s in (HORIZON, ZENO, PHASE_LIMIT, BRANCH_LIMIT) for s in statuses):
        return EXIT_OK
    if any(s == NO_SOLUTION for s in statuses):
        return EXIT_NO_SOLUTION
    return EXIT_UNSUPPORTED


def cmd_check(args) -> int:
    try:
        prog = load_program(args.file, args.explicit_poset)
        doc = loads(Path(args.certificate).read_text(encoding="utf-8"))
        cert = certificate_from_document(doc, args.branch)
        if doc.get("continuity_defaults"):
            excluded = doc.get("options", {}).get("exclude_defaults", [])
            prog = inject_continuity_defaults(prog, tuple(excluded))
    except (ParseError, TraceFormatError, OSError) as exc:
        return _input_error(exc)
    except HydlaError as exc:
        return _input_error(exc)
    report = verify(prog, cert)
    print(report.summary())
    return EXIT_OK if report.accepted else EXIT_REJECT


def format_poset(ms) -> str:
    def fmt(s):
        return "{" + ", ".join(sorted(s)) + "}"
    lines = ["sets:"]
    lines += ["  " + fmt(s) for s in sorted(ms.elements, key=lambda s: (-len(s), sorted(s)))]
    lines.append("edges:")
    lines += [f"  {fmt(a)} < {fmt(b)}" for a, b in ms.hasse_edges()]
    return "\n".join(lines) + "\n"


def cmd_poset(args) -> int:
    try:
        prog = load_program(args.file, args.explicit_poset)
        if args.with_defaults:
            prog = inject_continuity_defaults(prog)
    except (ParseError, OSError) as exc:
        return _input_error(f"{args.file}: {exc}")
    except HydlaError as exc:
        return _input_error(exc)
    sys.stdout.write(format_poset(prog.ms))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"run": cmd_run, "check": cmd_check, "poset": cmd_poset}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
