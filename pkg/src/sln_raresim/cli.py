"""Command-line front end: ``sln-raresim <command> ...``.

Commands
  estimate     one quantity for one model file and threshold
  table        a benchmark table (1-9) as CSV
  paths        exact conditional Black-Scholes paths as CSV
  convergence  RE against n for the cdf / pdf kernels, plus the fitted slope
  tilt         print the tilting parameters (debugging aid)

Exit status is 2 for a bad configuration and 3 for an invalid model.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from . import lefttail, tables
from .estimators import ESTIMATORS, QUANTITIES, estimate
from .exceptions import ConfigError, ModelError, SlnError
from .model import BlackScholesSpec, black_scholes_model, load_model
from .optimize import solve_left_tilt
from .righttail import solve_right_tilts
from .rng import convergence_slope, pseudo_stream

EXIT_CONFIG = 2
EXIT_MODEL = 3


def _count(text: str) -> int:
    """Accept 1000000, 1e6 or 2^20."""
    try:
        if "^" in text:
            b, e = text.split("^")
            v = int(b) ** int(e)
        else:
            v = float(text)
            if v != int(v):
                raise ValueError
            v = int(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("counts must be non-negative")
    return v


def _grid(text: str) -> list:
    """'2^10..2^16' (powers of two) or a comma list of counts."""
    if ".." in text:
        lo, hi = (_count(p) for p in text.split(".."))
        a, b = math.log2(lo), math.log2(hi)
        if a != int(a) or b != int(b) or b < a:
            raise argparse.ArgumentTypeError("ranges must run between powers of two, e.g. 2^10..2^16")
        return [2 ** k for k in range(int(a), int(b) + 1)]
    return [_count(p) for p in text.split(",")]


def _bs_spec(text: str) -> BlackScholesSpec:
    try:
        kv = dict(item.split("=", 1) for item in text.split(","))
        return BlackScholesSpec(float(kv["X0"]), float(kv["r"]), float(kv["sigma"]), float(kv["T"]), int(kv["d"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"--bs needs X0=..,r=..,sigma=..,T=..,d=.. ({exc})") from None


def _threads(v):
    return v if v else (os.cpu_count() or 1)


# ---------------------------------------------------------------- commands


def cmd_estimate(args, out) -> int:
    model = load_model(args.model)
    est = estimate(model, args.quantity, args.gamma, args.n, args.estimator, args.stream, args.shifts,
                   args.seed, args.theta, threads=_threads(args.threads))
    d = est.to_dict()
    if args.json:
        out.write(json.dumps(d, sort_keys=True) + "\n")
    elif args.csv:
        keys = ["estimate", "log10", "re_percent", "wnrv", "n", "seconds", "flags"]
        w = csv.writer(out, lineterminator="\n")
        w.writerow(keys)
        w.writerow([d[k] if k != "flags" else ";".join(d[k]) for k in keys])
    else:
        out.write(f"estimate  {d['estimate']}\n")
        out.write(f"log10     {d['log10']:.10g}\n")
        out.write(f"RE%       {d['re_percent']:.3g}\n")
        out.write(f"WNRV      {d['wnrv']:.3g}\n")
        out.write(f"n         {d['n']}\n")
        out.write(f"seconds   {d['seconds']}\n")
        out.write(f"flags     {', '.join(d['flags']) or '-'}\n")
    return 0


def cmd_table(args, out) -> int:
    if args.table not in tables.TABLES:
        raise ConfigError(f"unknown table {args.table}; choose 1-9")
    rows = tables.run_table(args.table, args.n, args.seed, threads=_threads(args.threads))
    out.write(f"# table {args.table}: {tables.TABLES[args.table].caption}; n={args.n} seed={args.seed}\n")
    out.write(tables.table_csv(args.table, rows))
    return 0


def cmd_paths(args, out) -> int:
    spec = _bs_spec(args.bs)
    model = black_scholes_model(spec)
    gamma = (spec.d + 1) * args.strike - spec.X0
    if not gamma > 0:
        raise ModelError(f"(d + 1) K - X0 = {gamma:g} must be positive")
    stream = pseudo_stream(args.seed, model.d + 1)
    sample = lefttail.sample_conditional(model, gamma, args.paths, stream, max_proposals=args.max_proposals)
    note = f"black-scholes {args.bs} strike={args.strike:g}"
    if sample.flags:
        note += "; flags: " + "; ".join(sample.flags)
    out.write(lefttail.paths_csv(sample, gamma, note))
    return 0


def cmd_convergence(args, out) -> int:
    model = load_model(args.model)
    tilt = solve_left_tilt(model, args.gamma)
    if args.quantity == "cdf":
        kern = lefttail.cdf_kernel(model, args.gamma, tilt.mu_star)
    else:
        kern = lefttail.pdf_kernel(model, args.gamma, tilt.mu_star)
    slope, rows = convergence_slope(kern, model.d, args.ngrid, R=args.shifts, seed=args.seed, kind=args.stream)
    out.write(f"# slope={slope:.4f} quantity={args.quantity} stream={args.stream} shifts={args.shifts}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["n", "re_percent"])
    for n, re in rows:
        w.writerow([n, f"{re:.6g}"])
    return 0


def cmd_tilt(args, out) -> int:
    model = load_model(args.model)
    if args.side == "left":
        t = solve_left_tilt(model, args.gamma)
        rep = {"w": t.w_star.tolist(), "mu": t.mu_star.tolist(), "objective": t.objective,
               "mu_residual": t.mu_residual, "converged": t.converged}
    else:
        rep = {"strata": [{"k": t.k + 1, "mu": t.mu.tolist(), "g1_slack": t.g1_slack, "g2_slack": t.g2_slack,
                           "kkt_residual": t.kkt_residual, "converged": t.converged, "fallback": t.fallback}
                          for t in solve_right_tilts(model, args.gamma)]}
    out.write(json.dumps(rep, indent=2) + "\n")
    return 0


# ------------------------------------------------------------------ parser


_TABLE_HELP = "\n".join(f"  {k}: {v.caption}" for k, v in tables.TABLES.items())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sln-raresim", description="Rare-event estimation for sums of log-normals.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate one quantity")
    e.add_argument("--model", required=True, help="model JSON file")
    e.add_argument("--quantity", required=True, choices=QUANTITIES)
    e.add_argument("--gamma", required=True, type=float)
    e.add_argument("--n", type=_count, default=10 ** 6)
    e.add_argument("--stream", choices=("pseudo", "sobol"), default="pseudo")
    e.add_argument("--shifts", type=int, default=None, help="RQMC shifts (default 100)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--estimator", default="new",
                   choices=sorted({v for vs in ESTIMATORS.values() for v in vs}))
    e.add_argument("--theta", type=float, default=None)
    e.add_argument("--threads", type=int, default=0, help="worker threads (0 = all cores)")
    fmt = e.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("table", help="reproduce a benchmark table as CSV",
                       formatter_class=argparse.RawDescriptionHelpFormatter, epilog="tables:\n" + _TABLE_HELP)
    t.add_argument("--table", required=True, type=int)
    t.add_argument("--n", type=_count, default=10 ** 6)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=int, default=0)
    t.set_defaults(func=cmd_table)

    a = sub.add_parser("paths", help="conditional Black-Scholes paths given a low average price")
    a.add_argument("--bs", default="X0=50,r=0.07,sigma=0.25,T=0.3333,d=88")
    a.add_argument("--strike", type=float, default=30.0)
    a.add_argument("--paths", type=_count, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--max-proposals", type=_count, default=None)
    a.set_defaults(func=cmd_paths)

    c = sub.add_parser("convergence", help="RE against n with the fitted log-log slope")
    c.add_argument("--quantity", choices=("cdf", "pdf"), default="cdf")
    c.add_argument("--model", required=True)
    c.add_argument("--gamma", required=True, type=float)
    c.add_argument("--ngrid", type=_grid, default=_grid("2^10..2^16"))
    c.add_argument("--shifts", type=int, default=30)
    c.add_argument("--stream", choices=("pseudo", "sobol"), default="sobol")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_convergence)

    g = sub.add_parser("tilt", help="print tilting parameters")
    g.add_argument("--model", required=True)
    g.add_argument("--gamma", required=True, type=float)
    g.add_argument("--side", choices=("left", "right"), default="left")
    g.set_defaults(func=cmd_tilt)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        return args.func(args, out)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SlnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
