"""Command-line interface: ``gpe fit``, ``gpe simulate`` and ``gpe power``.

Exit codes: 0 on success, 2 on bad input or flags, 3 on numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import GpeOptions, fit_gpe
from .dataset import DataError, load_csv, prepare
from .inference import t_test, theta_functional, unit_vector
from .selection import DEFAULT_C, select_k
from .simulation import DGP_NAMES, ESTIMATORS, H_MAX, DgpSpec, power_curve, run_mc

logger = logging.getLogger("gpe")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _estimators(text):
    names = tuple(s.strip().lower() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in ESTIMATORS]
    if not names or bad:
        raise InputError(f"unknown estimator(s) {bad}; valid: {', '.join(ESTIMATORS)}")
    return names


def parse_h_grid(text: str) -> np.ndarray:
    """Parse ``start:stop:step`` (stop inclusive) into a grid inside [0, H_MAX]."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--h-grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(v) for v in parts)
    except ValueError:
        raise InputError(f"--h-grid has a non-numeric field: {text!r}") from None
    if step <= 0 or stop < start:
        raise InputError("--h-grid needs step > 0 and stop >= start")
    if start < 0 or stop > H_MAX + 1e-12:
        raise InputError(f"--h-grid must lie within [0, {H_MAX}]")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    # rounded so that 0.1 * 3 prints as 0.3
    return np.round(start + step * np.arange(count), 12)


def _spec(args):
    try:
        return DgpSpec(args.dgp, args.n, args.p, cns_literal=args.cns_literal)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ----------------------------------------------------------------------------- fit


def _fit_report(data, frame, fit, trace, tau_extra):
    names = data.column_names
    p = data.p
    tests = {"theta": t_test(frame, fit, theta_functional(p)).to_dict()}
    for j, name in enumerate(names):
        tests[name] = t_test(frame, fit, unit_vector(p, j)).to_dict()
    if tau_extra is not None:
        tests["tau"] = t_test(frame, fit, tau_extra).to_dict()
    labels = fit.assignment.labels
    groups = [[names[j] for j in np.flatnonzero(labels == g)] for g in range(fit.assignment.k)]
    return {
        "n": data.n,
        "p": p,
        "k": int(fit.k),
        "beta": {name: float(b) for name, b in zip(names, fit.beta_hat)},
        "intercept": float(fit.intercept_hat) if frame.intercept else None,
        "groups": groups,
        "delta": [float(d) for d in fit.delta_hat],
        "objective": float(fit.objective),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "trace": trace.to_dict() if trace is not None else None,
        "tests": tests,
    }


def _coef_csv(data, fit, tests):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["column", "group", "beta", "se", "t_stat", "p_value"])
    for j, name in enumerate(data.column_names):
        t = tests[name]
        w.writerow([name, int(fit.assignment.labels[j]), repr(float(fit.beta_hat[j])),
                    repr(t["se"]), repr(t["t_stat"]), repr(t["p_value"])])
    return buf.getvalue()


def cmd_fit(args) -> int:
    try:
        data = load_csv(args.data, args.response, args.features)
        ungrouped = [data.column_index(name) for name in args.no_group]
        frame = prepare(data, intercept=args.intercept, ungrouped=ungrouped)
        tau = None
        if args.tau is not None:
            tau = np.array([float(v) for v in args.tau.split(",")])
            if tau.shape != (data.p,):
                raise InputError(f"--tau needs {data.p} comma-separated weights")
        options = GpeOptions(k=1 if args.k is None else args.k, max_iter=args.max_iter)
        if args.k is not None:
            options.validate(frame)
    except (DataError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if args.k is None:
            fit, trace = select_k(frame, C=args.c, k_max=args.k_max, options=options)
        else:
            fit, trace = fit_gpe(frame, options), None
        report = _fit_report(data, frame, fit, trace, tau)
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    out = Path(args.out)
    _write(out.with_suffix(".json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write(out.with_name(out.name + "_coef.csv"), _coef_csv(data, fit, report["tests"]))
    th = report["tests"]["theta"]
    print(f"k = {report['k']}  theta_hat = {th['theta_hat']:.6g}  se = {th['se']:.6g}  "
          f"p = {th['p_value']:.4g}")
    return EXIT_OK


# ------------------------------------------------------------------------ simulate


def cmd_simulate(args) -> int:
    try:
        spec = _spec(args)
        estimators = _estimators(args.estimators)
        if args.reps < 1 or args.jobs < 1:
            raise InputError("--reps and --jobs must be positive")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = run_mc(spec, estimators, args.reps, args.seed, args.c, jobs=args.jobs,
                    keep_records=args.records)
    out = Path(args.out)
    _write(out.with_suffix(".csv"), report.to_csv())
    _write(out.with_suffix(".json"), report.to_json())
    print(report.format_table())
    if report.n_failed:
        print(f"warning: {report.n_failed} replication fit(s) failed", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------- power


def power_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "h", "rejection"])
    for est, h, rate in rows:
        w.writerow([est, repr(h), repr(rate)])
    return buf.getvalue()


def cmd_power(args) -> int:
    try:
        spec = _spec(args)
        estimators = _estimators(args.estimators)
        grid = parse_h_grid(args.h_grid)
        if args.reps < 1 or args.jobs < 1:
            raise InputError("--reps and --jobs must be positive")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rows = power_curve(spec, grid, args.reps, args.seed, args.c, estimators, jobs=args.jobs)
    text = power_csv(rows)
    _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


# -------------------------------------------------------------------------- parser


def _add_mc_flags(sp):
    sp.add_argument("--dgp", required=True, help=f"one of {', '.join(DGP_NAMES)} (case-insensitive)")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--p", type=int, default=75)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--estimators", default="gpe",
                    help=f"comma-separated subset of {', '.join(ESTIMATORS)}")
    sp.add_argument("--c", type=float, default=DEFAULT_C, help="selection threshold")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes; results do not depend on it")
    sp.add_argument("--cns-literal", action="store_true",
                    help="use the literal CnS slope instead of the range-consistent one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpe", description="Grouped parameter estimation")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a CSV dataset")
    f.add_argument("--data", required=True, help="CSV file with a header row")
    f.add_argument("--response", required=True)
    f.add_argument("--features", nargs="+", default=None, help="covariate columns (default: all others)")
    f.add_argument("--k", type=int, default=None, help="fix the number of groups instead of selecting it")
    f.add_argument("--k-max", type=int, default=None)
    f.add_argument("--c", type=float, default=DEFAULT_C, help="selection threshold")
    f.add_argument("--no-group", action="append", default=[], metavar="COLUMN",
                   help="keep COLUMN as its own singleton group (repeatable)")
    f.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    f.add_argument("--tau", default=None, help="extra comma-separated functional weights to test")
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--out", default="gpe_fit", help="output prefix for .json and _coef.csv")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="Monte Carlo study of one design")
    _add_mc_flags(s)
    s.add_argument("--records", action="store_true", help="include per-replication records in the JSON")
    s.add_argument("--out", default="simulation", help="output prefix for .csv and .json")
    s.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("power", help="rejection rates over shifted nulls")
    _add_mc_flags(pw)
    pw.add_argument("--h-grid", default="0:0.4:0.1", help="start:stop:step within [0, 0.4]")
    pw.add_argument("--out", default="power.csv")
    pw.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
