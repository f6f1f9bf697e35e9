"""Command-line entry points.

Exit status: 0 success, 1 invalid input, 2 aborted physics (blow-up, floor
breach, step underflow, solver failure), 3 file errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import format_config, parse_config
from .diagnostics import Inconclusive, inequality_corpus
from .experiments import (
    MmsSpec,
    SweepSpec,
    bisect_threshold,
    run_convergence,
    run_sweep,
    simulate,
    steady_check,
)
from .io import CsvSink, SnapshotError, _fmt, write_snapshot
from .model import ValidationError, validate_params
from .operators import SolverError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2
EXIT_IO = 3

log = logging.getLogger("chemotaxis")


class _Abort(Exception):
    pass


def _load(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    return parse_config(args.config, overrides)


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(format_config(cfg))
    with CsvSink(out / cfg.out_csv) as sink:
        res = simulate(cfg, sinks=[sink], keep_records=False)
    if cfg.out_snapshot:
        write_snapshot(res.state, cfg.grid, out / cfg.out_snapshot)
    _say(args, f"{res.status} at t={res.state.t:.17g} after {res.steps} steps")
    if not res.completed:
        raise _Abort(f"run aborted: {res.status} at t={res.state.t:.6g} ({res.message})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    result = run_sweep(SweepSpec.from_config(cfg), args.out_dir)
    for row in result.rows:
        _say(args, f"mu={row.mu:g} chi={row.chi:g} k={row.k:g}: {row.classification} ({row.status})")
    return EXIT_OK


def cmd_bisect(args) -> int:
    cfg = _load(args)
    out = Path(args.out_dir)
    try:
        res = bisect_threshold(SweepSpec.from_config(cfg), cfg.bisect_iters, out)
        transcript = res.transcript
        verdict = f"bounded above mu={res.mu_high!r}, not bounded at mu={res.mu_low!r} (width {res.width:.3g})"
    except Inconclusive as exc:
        transcript = exc.evidence or ()
        verdict = str(exc)
    with open(out / "bisect.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mu", "classification"))
        for mu, label in transcript:
            w.writerow((_fmt(mu), label))
    (out / "bisect.txt").write_text(verdict + "\n")
    _say(args, verdict)
    return EXIT_OK


def cmd_mms(args) -> int:
    spec = MmsSpec(levels=tuple(args.levels), t_end=args.t_end)
    if args.chi < 0.0:
        raise ValidationError("chi must be nonnegative")
    # chi = 0 is allowed here: the pure reaction-diffusion study is a verification mode
    params = validate_params(dict(chi=1.0, r=1.0, mu=1.0, alpha=1.0, beta=1.0, k=args.k,
                                  dim=1, lengths=spec.length, cells=spec.levels[0]))
    params = replace(params, chi=args.chi)
    rows = run_convergence(spec, params, args.scheme)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = ("cells", "h", "err_u", "err_v", "order_u", "order_v")
    with open(out / "mms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) for c in cols])
    print(f"{'cells':>6} {'err_u':>12} {'err_v':>12} {'order_u':>8} {'order_v':>8}")
    for row in rows:
        ou = "" if row.order_u is None else f"{row.order_u:.3f}"
        ov = "" if row.order_v is None else f"{row.order_v:.3f}"
        print(f"{row.cells:>6} {row.err_u:12.4e} {row.err_v:12.4e} {ou:>8} {ov:>8}")
    return EXIT_OK


def cmd_inequality(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "inequality.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dim", "cells", "p", "sample", "lhs", "laplace_term", "mass_term", "ratio"))
        for dim in args.dims:
            for p in args.p:
                for n in args.cells:
                    summary = inequality_corpus(dim, n, p, args.samples, args.seed or 0)
                    for i, e in enumerate(summary.entries):
                        w.writerow((dim, n, _fmt(p), i, _fmt(e.lhs), _fmt(e.laplace_term),
                                    _fmt(e.mass_term), _fmt(e.ratio)))
                    _say(args, f"dim={dim} p={p:g} N={n}: max ratio {summary.max_ratio:.6g}")
    return EXIT_OK


def cmd_steady(args) -> int:
    cfg = _load(args)
    worst = 0.0
    for res in steady_check(cfg):
        _say(args, f"{res.scheme}: {res.status}, max deviation {res.deviation:.3e}")
        if res.status != "completed":
            raise _Abort(f"{res.scheme} run aborted: {res.status}")
        worst = max(worst, res.deviation)
    if worst > args.tol:
        raise _Abort(f"steady state drifted by {worst:.3e} (> {args.tol:g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="chemotaxis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (("run", cmd_run, "single simulation"),
                                 ("sweep", cmd_sweep, "(mu, chi, k) sweep"),
                                 ("bisect", cmd_bisect, "empirical mu threshold"),
                                 ("steady-check", cmd_steady, "steady-state preservation")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.set_defaults(func=func)
        if name == "steady-check":
            p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("mms", parents=[common], help="manufactured-solution convergence table")
    p.add_argument("--chi", type=float, default=1.0)
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--scheme", default="explicit-euler")
    p.add_argument("--levels", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--t-end", type=float, default=0.25)
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("verify-lemma24", parents=[common], help="gradient inequality corpus study")
    p.add_argument("--dims", type=int, nargs="+", default=[1, 2])
    p.add_argument("--cells", type=int, nargs="+", default=[64, 128])
    p.add_argument("--p", type=float, nargs="+", default=[2.0, 3.0, 4.0])
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_inequality)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Abort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (SnapshotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
