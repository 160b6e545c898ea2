"""Command-line surface: generate | solve | validate | report.

Exit codes: 0 ok, 2 usage or invalid parameters, 3 infeasible model,
4 size-cap violations.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import engine, instfile, report, saa
from .apps import (AppError, CaopExponomialParams, CaopKappaParams, CaopMmnlParams,
                   CaopProbitParams, FlopParams, MsmflpParams, generate)
from .benders import StabilizerConfig
from .model import ModelError
from .sampling import SamplingError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_CAPACITY = 4

_APPS = {
    "caop-exponomial": CaopExponomialParams,
    "caop-mmnl": CaopMmnlParams,
    "caop-probit": CaopProbitParams,
    "caop-kappa": CaopKappaParams,
    "flop": FlopParams,
    "msmflp": MsmflpParams,
}


def _add_app_flags(sub: argparse.ArgumentParser, app: str):
    sub.add_argument("--n", "--n-prod", dest="n", type=int, required=True,
                     help="products / facilities / options for the application")
    sub.add_argument("--n-scen", type=int, default=300, help="sample size N")
    sub.add_argument("--s1", type=int, default=1, help="instance seed")
    sub.add_argument("--s2", type=int, default=1, help="scenario seed")
    sub.add_argument("--sampling", choices=("lhs", "mcs"), default="lhs")
    if app == "caop-exponomial":
        sub.add_argument("--gamma", type=float, default=0.3)
        sub.add_argument("--sigma-r", type=float, default=0.2)
        sub.add_argument("--sigma-u", type=float, default=1.0)
        sub.add_argument("--zeta", type=float, default=1.0)
    elif app == "caop-mmnl":
        sub.add_argument("--tau", type=int, required=True)
        sub.add_argument("--r-bar", type=float, default=10.0)
        sub.add_argument("--dispersion", type=float, default=2.0)
    elif app == "caop-probit":
        sub.add_argument("--tau", type=int, required=True)
        sub.add_argument("--var", type=float, default=100.0, help="noise variance")
    elif app == "caop-kappa":
        sub.add_argument("--tau", type=int, required=True)
        sub.add_argument("--kappa", type=float, required=True)
    elif app == "flop":
        sub.add_argument("--tau", type=int, required=True)
        sub.add_argument("--levels", type=int, default=10)
        sub.add_argument("--budget", type=float, default=10.0)
    elif app == "msmflp":
        sub.add_argument("--tau", type=int, required=True)
        sub.add_argument("--outside", type=float, default=10.0)


def _params_from_args(app: str, args) -> object:
    common = dict(instance_seed=args.s1, scenario_seed=args.s2,
                  n_scenarios=args.n_scen, scheme=args.sampling)
    if app == "caop-exponomial":
        return CaopExponomialParams(n_products=args.n, gamma=args.gamma,
                                    sigma_r=args.sigma_r, sigma_u=args.sigma_u,
                                    zeta=args.zeta, **common)
    if app == "caop-mmnl":
        return CaopMmnlParams(n_products=args.n, tau=args.tau, r_bar=args.r_bar,
                              dispersion=args.dispersion, **common)
    if app == "caop-probit":
        return CaopProbitParams(n_products=args.n, tau=args.tau,
                                noise_variance=args.var, **common)
    if app == "caop-kappa":
        return CaopKappaParams(n_options=args.n, kappa=args.kappa, tau=args.tau, **common)
    if app == "flop":
        return FlopParams(n_facilities=args.n, tau=args.tau, n_levels=args.levels,
                          budget=args.budget, **common)
    if app == "msmflp":
        return MsmflpParams(n_facilities=args.n, tau=args.tau, outside=args.outside, **common)
    raise AppError(f"unknown application {app!r}")


def _solve_config(args) -> engine.SolveConfig:
    stab = None
    if getattr(args, "stabilize", False):
        stab = StabilizerConfig(enabled=True)
    return engine.SolveConfig(
        method=args.method,
        time_limit=args.time_limit,
        mrv=args.mrv,
        heuristic_period=args.heuristic_period,
        stage1_rho=args.stage1_rho,
        stabilizer=stab,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choiceplan",
        description="Scenario-sampling solver for stochastic choice-based discrete planning",
    )
    parser.add_argument("--seed", type=int, default=0, help="global seed for solver config")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for manifests; execution is single-threaded")
    parser.add_argument("--output", "-o", dest="global_output", default=None)
    cmds = parser.add_subparsers(dest="command", required=True)

    gen = cmds.add_parser("generate", help="write a sampled instance file")
    gen_sub = gen.add_subparsers(dest="app", required=True)
    for app in _APPS:
        sub = gen_sub.add_parser(app)
        _add_app_flags(sub, app)
        sub.add_argument("-o", "--output", required=True, help="instance JSON path")
        sub.add_argument("--compact", action="store_true",
                         help="force base64 scenario matrices")

    sol = cmds.add_parser("solve", help="solve an instance file")
    sol.add_argument("instance", help="instance JSON path")
    sol.add_argument("--method", choices=("sbbd", "extensive", "enum"), default="sbbd")
    sol.add_argument("--time-limit", type=float, default=3600.0)
    sol.add_argument("--mrv", type=float, default=1e-5)
    sol.add_argument("--heuristic-period", type=int, default=200)
    sol.add_argument("--stage1-rho", type=float, default=None)
    sol.add_argument("--stabilize", action="store_true")
    sol.add_argument("-o", "--output", default=None, help="stats CSV path")
    sol.add_argument("--solution-out", default=None, help="solution JSON path")
    sol.add_argument("--append", action="store_true", help="append to the stats CSV")

    val = cmds.add_parser("validate", help="replicated SAA gap estimation")
    val_sub = val.add_subparsers(dest="app", required=True)
    for app in _APPS:
        sub = val_sub.add_parser(app)
        _add_app_flags(sub, app)
        sub.add_argument("--m", type=int, required=True, help="number of replications")
        sub.add_argument("--alpha", type=float, default=0.95)
        sub.add_argument("--n-prime", type=int, default=1_000_000)
        sub.add_argument("--method", choices=("sbbd", "extensive", "enum"), default="sbbd")
        sub.add_argument("--time-limit", type=float, default=3600.0)
        sub.add_argument("--mrv", type=float, default=1e-5)
        sub.add_argument("--heuristic-period", type=int, default=200)
        sub.add_argument("--stage1-rho", type=float, default=None)
        sub.add_argument("--stabilize", action="store_true")
        sub.add_argument("--base-seed", type=int, default=0)
        sub.add_argument("--eval-seed", type=int, default=777)
        sub.add_argument("-o", "--output", required=True, help="report JSON path")
        sub.add_argument("--csv", default=None, help="also write a one-row CSV")

    rep = cmds.add_parser("report", help="aggregate result CSVs")
    rep.add_argument("csvs", nargs="+", help="input CSV files (one shared schema)")
    rep.add_argument("-o", "--output", required=True, help="output directory")
    rep.add_argument("--group-by", default="method")
    rep.add_argument("--plot", action="store_true", help="also render PNG figures")

    return parser


def cmd_generate(args) -> int:
    params = _params_from_args(args.app, args)
    inst = generate(params)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    instfile.save_instance(inst, out, compact=True if args.compact else None)
    print(out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = instfile.load_instance(args.instance)
    cfg = _solve_config(args)
    try:
        sol = engine.solve(inst, cfg)
    except engine.SizeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except ModelError as e:
        if "cap" in str(e):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CAPACITY
        raise
    inst_id = Path(args.instance).stem
    out = Path(args.output or args.global_output or f"{inst_id}.result.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_solve_csv([report.solution_csv_row(inst_id, args.method, sol)],
                           out, append=args.append)
    sol_out = Path(args.solution_out or out.with_suffix(".sol.json"))
    with open(sol_out, "w") as fh:
        json.dump({
            "instance": inst_id,
            "method": args.method,
            "status": sol.status,
            "objective": sol.objective if np.isfinite(sol.objective) else None,
            "bound": sol.bound if np.isfinite(sol.bound) else None,
            "x": None if sol.x is None else [int(v) for v in sol.x],
            "stats": vars(sol.stats),
        }, fh, indent=2)
    print(out)
    if sol.status == engine.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_validate(args) -> int:
    params = _params_from_args(args.app, args)
    if args.m < 2:
        print("error: variance estimation needs --m >= 2", file=sys.stderr)
        return EXIT_USAGE
    cfg = _solve_config(args)
    rep = saa.run_validation(params, n=args.n_scen, m=args.m, alpha=args.alpha,
                             n_prime=args.n_prime, cfg=cfg,
                             base_seed=args.base_seed, eval_seed=args.eval_seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    saa.write_report(rep, json_path=out, csv_path=args.csv)
    manifest = {
        "experiment": out.stem,
        "app": args.app,
        "params": {k: (v if not isinstance(v, np.ndarray) else list(v))
                   for k, v in params.__dict__.items()},
        "n": args.n_scen,
        "m": args.m,
        "alpha": args.alpha,
        "n_prime": args.n_prime,
        "method": args.method,
        "base_seed": args.base_seed,
        "eval_seed": args.eval_seed,
        "threads": args.threads,
        "outputs": [str(out)] + ([args.csv] if args.csv else []),
    }
    with open(out.with_suffix(".manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(out)
    return EXIT_OK


def cmd_report(args) -> int:
    header, rows = report.read_rows(args.csvs)
    group_by = args.group_by if args.group_by in header else None
    table = report.summarize(header, rows, group_by)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    summary_path = report.write_summary(table, outdir / "summary.csv")
    written = [str(summary_path)]
    if args.plot:
        written += report.render_figures(header, rows, group_by, outdir)
    for path in written:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "report":
            return cmd_report(args)
    except (AppError, SamplingError, ModelError, instfile.InstanceFileError,
            report.ReportError, saa.SaaError, engine.EngineError, OSError) as e:
        if isinstance(e, engine.SizeCapError):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CAPACITY
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
