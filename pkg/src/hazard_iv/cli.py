"""Command-line front-end: fit estimators on CSV data, run simulation studies.

Subcommands: ``fit`` (estimates on a user CSV), ``simulate`` (one Monte Carlo
scenario), ``sweep`` (a scenario grid), ``km`` (survival-curve tables).
stdout carries only data; progress and errors go to stderr, errors as one
JSON object per line. Exit codes: 0 success, 1 input error, 2 estimator
non-convergence. Every command is a pure function of its inputs and seed, so
repeated invocations write byte-identical output files; HAZARD_IV_THREADS
caps internal parallelism without changing any output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .cox import fit_cox, kaplan_meier
from .dataset import load_csv
from .errors import (
    BootstrapUnreliableError,
    ConfigurationError,
    ConvergenceError,
    HazardIVError,
    IdentificationError,
    NoSolutionError,
    UnsupportedError,
    ValidationError,
    WeakInstrumentError,
)
from .iv import first_stage_f, fit_iv, fit_pooled_iv
from .simulation import (
    SWEEP_COLUMNS,
    SimConfig,
    grid_from_lists,
    resolve_threads,
    run_study,
    summary_rows,
    sweep,
)
from .weighting import dichotomize, fit_propensity, fit_wang, ipw_weights

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOCONV = 2

_INPUT_ERRORS = (ConfigurationError, ValidationError, IdentificationError,
                 UnsupportedError)
_SOLVE_ERRORS = (NoSolutionError, ConvergenceError, WeakInstrumentError,
                 BootstrapUnreliableError)


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as input errors (exit 1, JSON)."""

    def error(self, message):
        _emit_error("configuration_error", message)
        raise SystemExit(EXIT_INPUT)


def _emit_error(code, message, **extra):
    payload = {"error": code, "message": message}
    payload.update(extra)
    print(json.dumps(_jsonable(payload)), file=sys.stderr)


def _error_code(exc):
    return {
        ConfigurationError: "configuration_error",
        ValidationError: "validation_error",
        IdentificationError: "identification_error",
        UnsupportedError: "unsupported",
        NoSolutionError: "no_solution",
        ConvergenceError: "non_convergence",
        WeakInstrumentError: "weak_instrument",
        BootstrapUnreliableError: "bootstrap_unreliable",
    }.get(type(exc), "error")


def _jsonable(obj):
    """Floats that JSON cannot carry become null (NaN) or 'inf' strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_output(text, out_path):
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def _csv_cell(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rows_to_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _add_data_args(p, *, require_instrument=False):
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--time", required=True, help="time column name")
    p.add_argument("--status", required=True, help="status column name (0/1)")
    p.add_argument("--treatment", required=True, help="treatment column name")
    p.add_argument("--instrument", action="append", default=[],
                   required=require_instrument,
                   help="instrument column name (repeatable)")
    p.add_argument("--covariates", default="",
                   help="comma-separated covariate column names")
    p.add_argument("--delimiter", default=",", help="CSV field separator")
    p.add_argument("--na-policy", choices=("reject", "drop"), default="reject")


def _load(args):
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()]
    column_map = {
        "time": args.time, "status": args.status, "treatment": args.treatment,
        "instruments": list(args.instrument), "covariates": covs,
    }
    return load_csv(args.data, column_map, na_policy=args.na_policy,
                    delimiter=args.delimiter)


def _run_method(method, d, args):
    if method == "cox":
        return fit_cox(d, ci_level=args.ci_level)
    if method == "iv":
        _need_instrument(d, method)
        return fit_iv(d, 0, ci_level=args.ci_level)
    if method == "ipw_cox":
        model = fit_propensity(d, "treatment_given_q")
        weights = ipw_weights(model, d, stabilized=True)
        return fit_cox(d, weights=weights, ci_level=args.ci_level)
    if method == "wang":
        _need_instrument(d, method)
        w = d.instruments[:, 0]
        if not np.all(np.isin(w, (0.0, 1.0))):
            cut = float(np.mean(w))
            print(f"note: dichotomized instrument at mean={cut:g} for method wang",
                  file=sys.stderr)
            d = d.with_instruments(dichotomize(w)[:, None])
        return fit_wang(d, 0, boot_reps=args.boot_reps, seed=args.seed,
                        ci_level=args.ci_level)
    if method == "pooled_iv":
        _need_instrument(d, method)
        return fit_pooled_iv(d, ci_level=args.ci_level,
                             boot_reps=args.boot_reps, seed=args.seed)
    raise ConfigurationError(f"unknown method {method!r}")


def _need_instrument(d, method):
    if d.n_instruments < 1:
        raise ConfigurationError(f"method {method!r} needs --instrument")


def cmd_fit(args) -> int:
    d = _load(args)
    methods = args.method or ["cox"]
    fits = []
    solve_failures = False
    for method in methods:
        try:
            fits.append(_run_method(method, d, args))
        except _SOLVE_ERRORS as exc:
            solve_failures = True
            _emit_error(_error_code(exc), str(exc), method=method)
        except _INPUT_ERRORS as exc:
            _emit_error(_error_code(exc), str(exc), method=method)
            return EXIT_INPUT

    f_stats = None
    if d.n_instruments > 0:
        names = d.column_names.get("instruments") or [
            f"instrument_{m}" for m in range(d.n_instruments)
        ]
        f_stats = {}
        for m, name in enumerate(names):
            try:
                f_stats[name] = first_stage_f(d, m)
            except HazardIVError:
                f_stats[name] = None

    if args.format == "json":
        payload = {
            "command": "fit",
            "n": d.n,
            "events": d.n_events,
            "dropped_rows": d.n_dropped,
            "first_stage_f": f_stats,
            "fits": [f.to_dict() for f in fits],
        }
        text = json.dumps(_jsonable(payload), indent=2) + "\n"
    else:
        columns = ("method", "beta_hat", "hr_hat", "se", "ci_low", "ci_high",
                   "hr_ci_low", "hr_ci_high", "ci_level", "converged",
                   "iterations", "score_at_solution", "se_kind")
        rows = [{c: f.to_dict().get(c) for c in columns} for f in fits]
        text = _rows_to_csv(rows, columns)
    _write_output(text, args.out)
    return EXIT_NOCONV if solve_failures else EXIT_OK


def _parse_float_list(raw, flag):
    try:
        values = [float(v) for v in str(raw).split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"{flag} expects a comma-separated number list") from None
    if not values:
        raise ConfigurationError(f"{flag} is empty")
    return values


def _sim_config(args, alpha_u, alpha_w, hr):
    return SimConfig(
        n=args.n, alpha_u=alpha_u, alpha_w=alpha_w, hr_x=hr, reps=args.reps,
        seed=args.seed, estimators=tuple(args.method or ("iv",)),
        boot_reps=args.boot_reps, n_instruments=args.instruments,
    )


def _progress(cfg, reps):
    print(f"done: alpha_u={cfg.alpha_u:g} alpha_w={cfg.alpha_w:g} "
          f"hr={cfg.hr_x:g} reps={reps}", file=sys.stderr)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args, args.alpha_u, args.alpha_w, args.hr)
    summary = run_study(cfg, threads=resolve_threads(), progress=_progress)
    print(f"runtime_seconds={summary.runtime_seconds:.3f}", file=sys.stderr)
    if args.format == "json":
        text = json.dumps(_jsonable(summary.to_dict()), indent=2) + "\n"
    else:
        text = _rows_to_csv(summary_rows(summary), SWEEP_COLUMNS)
    _write_output(text, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = grid_from_lists(
        _parse_float_list(args.alpha_u, "--alpha-u"),
        _parse_float_list(args.alpha_w, "--alpha-w"),
        _parse_float_list(args.hr, "--hr"),
        _sim_config(args, 1.0, 1.0, 1.5),
    )
    rows = sweep(grid, threads=resolve_threads(), progress=_progress)
    if args.format == "json":
        text = json.dumps(_jsonable(rows), indent=2) + "\n"
    else:
        text = _rows_to_csv(rows, SWEEP_COLUMNS)
    _write_output(text, args.out)
    return EXIT_OK


def cmd_km(args) -> int:
    d = _load(args)
    group = "treatment" if args.by_treatment else None
    curves = kaplan_meier(d, group=group)

    blocks = []
    for label, curve in curves.items():
        if group is None:
            mask = np.ones(d.n, dtype=bool)
        else:
            mask = d.treatment == float(label)
        events = int(d.status[mask].sum())
        person_time = float(d.time[mask].sum())
        rate = 100.0 * events / person_time if person_time > 0 else float("nan")
        blocks.append((label, int(mask.sum()), events, person_time, rate, curve))

    if args.format == "json":
        payload = {"command": "km", "groups": [
            {
                "label": label, "n": n_rows, "events": events,
                "person_time": person_time, "rate_per_100": rate,
                "curve": {
                    "time": curve.times, "survival": curve.survival,
                    "at_risk": curve.at_risk, "events": curve.events,
                },
            }
            for label, n_rows, events, person_time, rate, curve in blocks
        ]}
        text = json.dumps(_jsonable(payload), indent=2) + "\n"
    else:
        buf = io.StringIO()
        for label, n_rows, events, person_time, rate, _ in blocks:
            buf.write(f"# group={label} n={n_rows} events={events} "
                      f"person_time={repr(person_time)} rate_per_100={repr(rate)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("group", "time", "survival", "at_risk", "events"))
        for label, _, _, _, _, curve in blocks:
            for k in range(len(curve.times)):
                writer.writerow((label, repr(float(curve.times[k])),
                                 repr(float(curve.survival[k])),
                                 int(curve.at_risk[k]), int(curve.events[k])))
        text = buf.getvalue()
    _write_output(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hazard-iv",
                     description="Population-average hazard ratio estimation "
                                 "and Monte Carlo studies")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit estimators on a CSV dataset")
    _add_data_args(p_fit)
    p_fit.add_argument("--method", action="append",
                       choices=("cox", "iv", "ipw_cox", "wang", "pooled_iv"),
                       help="estimator to run (repeatable; default cox)")
    p_fit.add_argument("--ci-level", type=float, default=0.95)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--boot-reps", type=int, default=500)
    p_fit.add_argument("--out", default=None)
    p_fit.add_argument("--format", choices=("json", "csv"), default="json")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run one Monte Carlo scenario")
    p_sim.add_argument("--alpha-u", type=float, default=1.0)
    p_sim.add_argument("--alpha-w", type=float, default=1.0)
    p_sim.add_argument("--hr", type=float, default=1.5)
    p_sim.add_argument("--n", type=int, default=1000)
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--method", action="append",
                       choices=("cox", "iv", "ipw_cox", "wang", "pooled_iv"))
    p_sim.add_argument("--boot-reps", type=int, default=50)
    p_sim.add_argument("--instruments", type=int, default=1,
                       help="number of instruments in the generated data")
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--format", choices=("json", "csv"), default="json")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run a grid of scenarios")
    p_sweep.add_argument("--alpha-u", default="1,2,3",
                         help="comma-separated endogeneity values")
    p_sweep.add_argument("--alpha-w", default="1,2,3",
                         help="comma-separated instrument-strength values")
    p_sweep.add_argument("--hr", default=f"{2.0 / 3.0!r},1,1.5",
                         help="comma-separated true hazard ratios")
    p_sweep.add_argument("--n", type=int, default=1000)
    p_sweep.add_argument("--reps", type=int, default=500)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--method", action="append",
                         choices=("cox", "iv", "ipw_cox", "wang", "pooled_iv"))
    p_sweep.add_argument("--boot-reps", type=int, default=50)
    p_sweep.add_argument("--instruments", type=int, default=1)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", choices=("json", "csv"), default="csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_km = sub.add_parser("km", help="survival-curve tables")
    _add_data_args(p_km)
    p_km.add_argument("--by-treatment", action="store_true",
                      help="one curve per treatment level")
    p_km.add_argument("--out", default=None)
    p_km.add_argument("--format", choices=("json", "csv"), default="csv")
    p_km.set_defaults(func=cmd_km)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_INPUT
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        _emit_error(_error_code(exc), str(exc))
        return EXIT_INPUT
    except _SOLVE_ERRORS as exc:
        _emit_error(_error_code(exc), str(exc))
        return EXIT_NOCONV
    except OSError as exc:
        _emit_error("io_error", str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
