"""Command-line entry point: theory calculators, simulations, fitting,
forecasting, and diagnostics as subcommands.

Every subcommand echoes its resolved configuration as a JSON line and
writes its outputs (CSV tables, JSON documents) under the output
directory, which defaults to $TARGETRF_OUTDIR or the working directory.
A JSON config file can supply any long option; explicit flags win.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .cart import TreeConfig
from .datacore import expanding_windows, load_csv
from .evallab import ForecastMethod, dm_test, run_forecast_experiment, tree_diagnostics
from .forest import ForestConfig, fit_forest
from .simlab import SWEEP_COLUMNS, Dgp, sweep
from .targeting import fit_trf, select_targets
from .theory import cstar_numeric, mse_bounds_ordinary, mse_targeted, upper_bound_split_prob

# Paper-style defaults for the empirical pipeline.
DEFAULT_TREES = 500
DEFAULT_MAX_DEPTH = 3
DEFAULT_MTRY_FRACTION = 1.0 / 3.0


def _outdir(args) -> Path:
    out = args.outdir or os.environ.get("TARGETRF_OUTDIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_table(table: pd.DataFrame, args, stem: str) -> Path:
    """Emit a table as CSV (default) or JSON records per --format."""
    fmt = getattr(args, "format", None) or "csv"
    out = _outdir(args) / f"{stem}.{fmt}"
    if fmt == "json":
        out.write_text(table.to_json(orient="records", indent=2))
    else:
        table.to_csv(out, index=False)
    return out


def _echo(config: dict):
    print(json.dumps({k: v for k, v in sorted(config.items())}, default=str))


def _apply_config_file(args: argparse.Namespace):
    """Fill unset options from the JSON config file; flags win."""
    if getattr(args, "config", None) is None:
        return
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)


def _forest_config(args, seed: int) -> ForestConfig:
    trees = args.trees if args.trees is not None else DEFAULT_TREES
    max_depth = args.max_depth if args.max_depth is not None else DEFAULT_MAX_DEPTH
    return ForestConfig(
        n_trees=trees,
        bootstrap=True,
        tree=TreeConfig(mtry=DEFAULT_MTRY_FRACTION, max_depth=max_depth),
        seed=seed,
    )


def _parse_methods(spec: str) -> list[ForecastMethod]:
    methods = []
    for token in spec.split(","):
        token = token.strip()
        if token == "rf":
            methods.append(ForecastMethod(kind="rf"))
            continue
        if token.startswith("trf"):
            body = token[3:]
            expansion = "none"
            if "+" in body:
                body, expansion = body.split("+", 1)
            methods.append(
                ForecastMethod(kind="trf", s_prime=int(body), expansion=expansion)
            )
            continue
        raise ValueError(f"cannot parse method token {token!r}")
    return methods


def _cmd_theory_bounds(args) -> int:
    value = upper_bound_split_prob(args.a, args.s, args.m)
    print(f"{value:.3f}")
    _echo({"subcommand": "theory bounds", "a": args.a, "s": args.s, "m": args.m,
           "value": value})
    return 0


def _cmd_theory_cstar(args) -> int:
    alpha = args.alpha if args.alpha is not None else 4 * math.pi
    dgp = Dgp(kind=args.dgp, alpha=alpha)
    grid = args.grid if args.grid is not None else 10_000
    value = cstar_numeric(dgp.scalar_fn(), grid)
    print(f"{value:.4f}")
    _echo({"subcommand": "theory cstar", "dgp": args.dgp, "alpha": alpha,
           "grid": grid, "value": value})
    return 0


def _cmd_theory_mse(args) -> int:
    beta1 = args.beta1 if args.beta1 is not None else math.sqrt(12.0)
    value = mse_targeted(args.L, beta1)
    print(f"{value:.3f}")
    rhos: list[float] = list(args.rho or [])
    if args.rho_grid is not None:
        rhos.extend(np.linspace(0.0, 1.0, args.rho_grid))
    config = {"subcommand": "theory mse", "L": args.L, "beta1": beta1, "value": value}
    if rhos:
        table = pd.DataFrame(
            [
                {
                    "rho": r,
                    "mse_upper": mse_bounds_ordinary(args.L, r, beta1)[0],
                    "mse_lower": mse_bounds_ordinary(args.L, r, beta1)[1],
                    "mse_targeted": value,
                }
                for r in rhos
            ]
        )
        out = _write_table(table, args, f"theory_mse_L{args.L}")
        config["table"] = str(out)
    _echo(config)
    return 0


def _cmd_sim_rho(args) -> int:
    grid = pd.read_csv(args.grid_file)
    required = {"kind", "p", "n", "snr"}
    if not required <= set(grid.columns):
        raise ValueError(f"grid file needs columns {sorted(required)}")
    cells = [
        (
            row.kind,
            int(row.p),
            int(row.n),
            float(row.snr),
            float(row.alpha) if "alpha" in grid.columns and not pd.isna(row.alpha) else None,
        )
        for row in grid.itertuples()
    ]
    reps = args.reps if args.reps is not None else 10_000
    rows = sweep(cells, reps=reps, seed=args.seed, workers=args.workers or 1)
    table = pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
    out = _write_table(table, args, "sim_rho")
    _echo({"subcommand": "sim rho", "grid_file": args.grid_file, "reps": reps,
           "seed": args.seed, "workers": args.workers or 1, "cells": len(cells),
           "table": str(out)})
    return 0


def _cmd_targets(args) -> int:
    dataset, dropped = load_csv(args.csv, args.response)
    expansion = args.expand or "none"
    selection, _ = select_targets(dataset, args.sprime, expansion)
    out = _outdir(args) / "targets.json"
    out.write_text(selection.to_json())
    print(selection.to_json())
    _echo({"subcommand": "targets", "csv": args.csv, "response": args.response,
           "sprime": args.sprime, "expand": expansion, "rows_dropped": dropped,
           "output": str(out)})
    return 0


def _cmd_fit(args) -> int:
    dataset, dropped = load_csv(args.csv, args.response)
    config = _forest_config(args, args.seed)
    outdir = _outdir(args)
    paths = {}
    if args.sprime is not None:
        selection, model = fit_trf(dataset, args.sprime, args.expand or "none", config)
        sel_path = outdir / "targets.json"
        sel_path.write_text(selection.to_json())
        paths["selection"] = str(sel_path)
    else:
        model = fit_forest(dataset, config)
    model_path = outdir / "forest.json"
    model_path.write_text(model.to_json())
    paths["model"] = str(model_path)
    _echo({"subcommand": "fit", "csv": args.csv, "response": args.response,
           "sprime": args.sprime, "trees": config.n_trees,
           "max_depth": config.tree.max_depth, "seed": args.seed,
           "rows_dropped": dropped, **paths})
    return 0


def _cmd_forecast(args) -> int:
    dataset, dropped = load_csv(args.csv, args.response)
    plan = expanding_windows(dataset.n, args.initial, args.h)
    methods = _parse_methods(args.methods)
    config = _forest_config(args, args.seed)
    regimes = None
    if args.regimes is not None:
        table = pd.read_csv(args.regimes)
        regimes = {int(r.time_index): str(r.label) for r in table.itertuples()}
    report = run_forecast_experiment(dataset, plan, methods, config, regimes=regimes)
    outdir = _outdir(args)
    report_path = _write_table(report.to_dataframe(), args, "forecasts")
    config_echo = {"subcommand": "forecast", "csv": args.csv,
                   "response": args.response, "h": args.h, "initial": args.initial,
                   "methods": [m.label for m in methods], "windows": len(plan),
                   "trees": config.n_trees, "seed": args.seed,
                   "rows_dropped": dropped, "report": str(report_path)}
    if len(methods) > 1:
        base = methods[0].label
        tests = {
            m.label: dm_test(
                report.squared_errors(m.label), report.squared_errors(base), args.h
            ).to_dict()
            for m in methods[1:]
        }
        dm_path = outdir / "dm_tests.json"
        dm_path.write_text(json.dumps({"baseline": base, "tests": tests}, indent=2))
        config_echo["dm_tests"] = str(dm_path)
    _echo(config_echo)
    return 0


def _cmd_diagnose(args) -> int:
    dataset, dropped = load_csv(args.csv, args.response)
    grid = [int(tok) for tok in args.sprime_grid.split(",")]
    n_train = args.train_rows if args.train_rows is not None else int(0.75 * dataset.n)
    if not 0 < n_train < dataset.n:
        raise ValueError(f"train_rows must lie in (0, {dataset.n})")
    config = _forest_config(args, args.seed)
    curve = tree_diagnostics(
        dataset,
        train_rows=np.arange(n_train),
        test_rows=np.arange(n_train, dataset.n),
        s_prime_grid=grid,
        forest_config=config,
    )
    out = _write_table(curve.to_dataframe(), args, "diagnostics")
    _echo({"subcommand": "diagnose", "csv": args.csv, "response": args.response,
           "sprime_grid": grid, "train_rows": n_train, "trees": config.n_trees,
           "seed": args.seed, "rows_dropped": dropped, "table": str(out)})
    return 0


def _add_common(parser: argparse.ArgumentParser, seed_required: bool = False):
    parser.add_argument("--outdir", help="output directory (default $TARGETRF_OUTDIR or .)")
    parser.add_argument("--config", help="JSON file supplying unset options; flags win")
    parser.add_argument("--format", choices=["csv", "json"],
                        help="table output format (default csv)")
    if seed_required:
        parser.add_argument("--seed", type=int, required=True, help="master seed")


def _add_forest_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--trees", type=int, help=f"trees per forest (default {DEFAULT_TREES})")
    parser.add_argument("--max-depth", type=int, dest="max_depth",
                        help=f"maximum tree depth (default {DEFAULT_MAX_DEPTH})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="targetrf",
        description="Random forest regression with predictor targeting: "
                    "theory calculators, simulations, and forecast evaluation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    theory = sub.add_parser("theory", help="closed-form bound and MSE calculators")
    tsub = theory.add_subparsers(dest="theory_command", required=True)

    bounds = tsub.add_parser("bounds", help="hypergeometric strong-draw bound")
    bounds.add_argument("--a", type=int, required=True, help="number of predictors")
    bounds.add_argument("--s", type=int, required=True, help="number of strong predictors")
    bounds.add_argument("--m", type=int, required=True, help="feature-sample size")
    _add_common(bounds)
    bounds.set_defaults(handler=_cmd_theory_bounds)

    cstar = tsub.add_parser("cstar", help="numeric maximal signal of a bundled DGP")
    cstar.add_argument("--dgp", required=True,
                       choices=["linear", "sine", "quadratic", "piecewise15"])
    cstar.add_argument("--alpha", type=float, help="sine frequency (default 4*pi)")
    cstar.add_argument("--grid", type=int, help="tau grid size (default 10000)")
    _add_common(cstar)
    cstar.set_defaults(handler=_cmd_theory_cstar)

    mse = tsub.add_parser("mse", help="targeted-tree MSE and ordinary-tree bounds")
    mse.add_argument("--L", type=int, required=True, help="leaf count")
    mse.add_argument("--beta1", type=float, help="strong slope (default sqrt(12))")
    mse.add_argument("--rho", type=float, nargs="*", help="strong-split probabilities")
    mse.add_argument("--rho-grid", type=int, dest="rho_grid",
                     help="emit a uniform rho grid of this size")
    _add_common(mse)
    mse.set_defaults(handler=_cmd_theory_mse)

    sim = sub.add_parser("sim", help="Monte Carlo splitting experiments")
    ssub = sim.add_subparsers(dest="sim_command", required=True)
    rho_cmd = ssub.add_parser("rho", help="strong-split probability over a grid")
    rho_cmd.add_argument("--grid-file", dest="grid_file", required=True,
                         help="CSV with columns kind,p,n,snr[,alpha]")
    rho_cmd.add_argument("--reps", type=int, help="replications per cell (default 10000)")
    rho_cmd.add_argument("--workers", type=int, help="process pool size (default 1)")
    _add_common(rho_cmd, seed_required=True)
    rho_cmd.set_defaults(handler=_cmd_sim_rho)

    targets = sub.add_parser("targets", help="LASSO predictor selection")
    targets.add_argument("--csv", required=True)
    targets.add_argument("--response", required=True)
    targets.add_argument("--sprime", type=int, required=True)
    targets.add_argument("--expand",
                         choices=["none", "powers_23", "powers_23_plus_interactions"])
    _add_common(targets)
    targets.set_defaults(handler=_cmd_targets)

    fit = sub.add_parser("fit", help="fit an ordinary or targeted forest")
    fit.add_argument("--csv", required=True)
    fit.add_argument("--response", required=True)
    fit.add_argument("--sprime", type=int, help="target this many predictors first")
    fit.add_argument("--expand",
                     choices=["none", "powers_23", "powers_23_plus_interactions"])
    _add_forest_flags(fit)
    _add_common(fit, seed_required=True)
    fit.set_defaults(handler=_cmd_fit)

    forecast = sub.add_parser("forecast", help="expanding-window comparison")
    forecast.add_argument("--csv", required=True)
    forecast.add_argument("--response", required=True)
    forecast.add_argument("--h", type=int, required=True, help="forecast horizon")
    forecast.add_argument("--initial", type=int, required=True,
                          help="initial training window length")
    forecast.add_argument("--methods", required=True,
                          help="comma list, e.g. rf,trf10,trf10+powers_23")
    forecast.add_argument("--regimes", help="CSV with columns time_index,label")
    _add_forest_flags(forecast)
    _add_common(forecast, seed_required=True)
    forecast.set_defaults(handler=_cmd_forecast)

    diagnose = sub.add_parser("diagnose", help="tree strength-correlation curve")
    diagnose.add_argument("--csv", required=True)
    diagnose.add_argument("--response", required=True)
    diagnose.add_argument("--sprime-grid", dest="sprime_grid", required=True,
                          help="comma list of targeting levels")
    diagnose.add_argument("--train-rows", dest="train_rows", type=int,
                          help="training rows (default 75%% of the sample)")
    _add_forest_flags(diagnose)
    _add_common(diagnose, seed_required=True)
    diagnose.set_defaults(handler=_cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.handler(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime failures exit 1, usage errors exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
