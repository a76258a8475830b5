"""Command-line entry point: ``ftrend fit|cv|simulate|bench``.

Exit status is 0 on success, 2 for bad input (malformed files, invalid
flags) and 3 when a numerical routine fails.  A fit that stops at the
iteration limit still exits 0 and reports ``"converged": false``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ftrend import __version__
from ftrend.errors import ConvergenceError, CoverageError, DimensionError
from ftrend.fda import fpca, project, reconstruct
from ftrend.fhp import fhp_objective, fit_fhp
from ftrend.ftf import fit_ftf, group_norms
from ftrend.io import InputError, matrix_csv, read_curves, read_edges, write_curves, write_json, write_text
from ftrend.select import CvPlan, Structure, cross_validate, default_template, oracle_select, parse_grid
from ftrend.sftf import default_weights, fit_sftf
from ftrend.sim import BENCH_METHODS, BenchSettings, ScenarioSpec, make_scenario, run_benchmark

log = logging.getLogger("ftrend")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


def provenance(args) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"tool": "ftrend", "version": __version__, "command": args.command, "flags": flags}


def _grid_flag(text, name):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise UsageError(f"--{name}: {exc}") from None


def _load(args):
    data = read_curves(args.input)
    structure = _structure(args, data.values.shape[0])
    if args.basis > min(data.values.shape):
        raise UsageError(f"--basis {args.basis} exceeds min(curves, grid points) = {min(data.values.shape)}")
    basis = fpca(data, args.basis, centered=args.centered)
    return data, basis, project(data, basis), structure


def _structure(args, n):
    if args.structure == "graph":
        if not args.graph:
            raise UsageError("--structure graph needs --graph EDGES.csv")
        return Structure("graph", args.k, read_edges(args.graph, n))
    if args.graph:
        raise UsageError("--graph only applies to --structure graph")
    return Structure("chain", args.k)


def _template(args, basis):
    omega = default_weights(basis) if args.method == "sftf" else None
    return default_template(args.method, adaptive_rho=args.adaptive_rho, omega=omega)


def _check_weights(args, fixed: bool):
    if args.method != "sftf" and (args.psi is not None or args.psi_grid):
        raise UsageError("psi only applies to --method sftf")
    if fixed:
        if (args.lam is None) == (args.lambda_grid is None):
            raise UsageError("give exactly one of --lambda and --lambda-grid")
        if args.method == "sftf" and (args.psi is None) == (args.psi_grid is None):
            raise UsageError("sftf needs exactly one of --psi and --psi-grid")
    for name in ("lam", "psi"):
        v = getattr(args, name, None)
        if v is not None and not (np.isfinite(v) and v >= 0):
            raise UsageError(f"--{'lambda' if name == 'lam' else name} must be a nonnegative number")


def _run_cv(args, Z, structure, template):
    lam_grid = _grid_flag(args.lambda_grid, "lambda-grid")
    psi_grid = None
    if args.method == "sftf":
        psi_grid = _grid_flag(args.psi_grid, "psi-grid") if args.psi_grid else np.array([args.psi])
    plan = CvPlan.build(Z.shape[0], args.folds, lam_grid, psi_grid)
    return cross_validate(Z, structure, args.method, plan, template, n_jobs=args.jobs)


def cmd_fit(args) -> int:
    _check_weights(args, fixed=True)
    data, basis, Z, structure = _load(args)
    template = _template(args, basis)
    cv_info = None
    lam, psi = args.lam, args.psi
    if args.lambda_grid is not None or args.psi_grid is not None:
        if args.lambda_grid is None:
            args.lambda_grid = f"{lam}:{lam}:1:lin"
        cv = _run_cv(args, Z, structure, template)
        lam, psi = cv.best_lam, cv.best_psi
        cv_info = {"best_lambda": lam, "best_psi": psi}
    op = structure.full_operator(Z.shape[0])
    if args.method == "fhp":
        B = fit_fhp(Z, op, lam)
        diag = {
            "converged": True,
            "iterations": 0,
            "objective": fhp_objective(Z, B, op, lam),
            "active_pattern": [bool(x) for x in group_norms(op.apply(B)) > 0] if op.r else [],
        }
    elif args.method == "ftf":
        res = fit_ftf(Z, op, replace(template, lam=float(lam)))
        B, diag = res.coefficients, res.diagnostics()
    else:
        res = fit_sftf(Z, op, replace(template, lam=float(lam), psi=float(psi)))
        B, diag = res.coefficients, res.diagnostics()
    out = Path(args.out)
    write_curves(out / "curves.csv", reconstruct(B, basis))
    write_text(out / "coefficients.csv", matrix_csv(B))
    diag.update(lam=float(lam), psi=None if psi is None else float(psi), L=basis.L,
                variance_proportions=basis.variance_proportions, provenance=provenance(args))
    if cv_info:
        diag["cv"] = cv_info
    write_json(out / "diagnostics.json", diag)
    if not diag["converged"]:
        log.warning("fit stopped at the iteration limit; see diagnostics.json")
    return EXIT_OK


def cmd_cv(args) -> int:
    _check_weights(args, fixed=False)
    if args.lambda_grid is None:
        raise UsageError("cv needs --lambda-grid")
    if args.method == "sftf" and args.psi_grid is None and args.psi is None:
        raise UsageError("sftf cross-validation needs --psi-grid or --psi")
    data, basis, Z, structure = _load(args)
    template = _template(args, basis)
    if args.oracle_mse:
        if not args.truth:
            raise UsageError("--oracle-mse needs --truth TRUTH.csv")
        truth = read_curves(args.truth)
        if truth.values.shape != data.values.shape or truth.grid != data.grid:
            raise UsageError("--truth must have the same grid and curve count as --input")
        psi_grid = None
        if args.method == "sftf":
            psi_grid = _grid_flag(args.psi_grid, "psi-grid") if args.psi_grid else np.array([args.psi])
        cv = oracle_select(Z, project(truth, basis), structure, args.method,
                           _grid_flag(args.lambda_grid, "lambda-grid"), psi_grid, template)
    else:
        if args.truth:
            raise UsageError("--truth only applies with --oracle-mse")
        cv = _run_cv(args, Z, structure, template)
    psis = [None] if cv.psi_grid is None else list(cv.psi_grid)
    lines = ["lambda,psi,score,nonconverged_folds"]
    for i, lam in enumerate(cv.lam_grid):
        for j, psi in enumerate(psis):
            lines.append(f"{float(lam)!r},{'' if psi is None else repr(float(psi))},"
                         f"{float(cv.scores[i, j])!r},{int(cv.nonconverged[i, j])}")
    out = Path(args.out)
    write_text(out / "cv_scores.csv", "\n".join(lines) + "\n")
    write_json(out / "cv_best.json", {
        "best_lambda": cv.best_lam,
        "best_psi": cv.best_psi,
        "best_score": float(cv.scores[cv.best_index]),
        "grid_shape": list(cv.scores.shape),
        "selection": "oracle_mse" if args.oracle_mse else f"{args.folds}-fold cv",
        "provenance": provenance(args),
    })
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = ScenarioSpec(args.scenario, args.sigma, T=args.T, H=args.H, seed=args.seed)
    truth, noisy = make_scenario(spec, args.rep)
    out = Path(args.out)
    write_curves(out / "truth.csv", truth)
    write_curves(out / "noisy.csv", noisy)
    write_json(out / "simulate.json", {"provenance": provenance(args)})
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = []
    for m in args.methods.split(","):
        m = m.strip()
        if m not in BENCH_METHODS:
            raise UsageError(f"--methods: unknown method {m!r}; choose from {', '.join(BENCH_METHODS)}")
        methods += [(m, 0)] if m == "fpc" else [(m, k) for k in args.k]
    spec = ScenarioSpec(args.scenario, args.sigma, T=args.T, H=args.H, seed=args.seed, replications=args.reps)
    settings = BenchSettings(
        methods=tuple(methods),
        L=args.basis,
        lam_grid=_grid_flag(args.lambda_grid, "lambda-grid"),
        psi_grid=_grid_flag(args.psi_grid, "psi-grid"),
        folds=args.folds,
        adaptive_rho=args.adaptive_rho,
        centered=args.centered,
    )
    table = run_benchmark(spec, settings, n_jobs=args.jobs)
    table.provenance = provenance(args)
    out = Path(args.out)
    write_text(out / "bench.csv", table.to_csv())
    write_json(out / "bench.json", table.to_json())
    return EXIT_OK


def _common(p, fit_like=True):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default FTREND_THREADS or all cores)")
    p.add_argument("--no-adaptive-rho", dest="adaptive_rho", action="store_false",
                   help="keep the ADMM penalty parameter fixed")
    p.add_argument("--centered", action="store_true", help="centre curves before FPCA")
    if fit_like:
        p.add_argument("--input", required=True, help="curve CSV: grid row, then one row per curve")
        p.add_argument("--method", choices=("ftf", "fhp", "sftf"), required=True)
        p.add_argument("--structure", choices=("chain", "graph"), default="chain")
        p.add_argument("--graph", help="edge-list CSV (1-based vertex pairs)")
        p.add_argument("--k", type=int, default=0, help="difference order")
        p.add_argument("--basis", type=int, default=5, help="number of FPCA components L")
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--psi", type=float)
        p.add_argument("--lambda-grid")
        p.add_argument("--psi-grid")
        p.add_argument("--folds", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftrend", description="Functional trend filtering.")
    parser.add_argument("--version", action="version", version=f"ftrend {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and export curves, coefficients and diagnostics")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate over a lambda (and psi) grid")
    _common(p)
    p.add_argument("--oracle-mse", action="store_true",
                   help="select by squared error against known true curves instead of CV")
    p.add_argument("--truth", help="true-curve CSV for --oracle-mse")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="write one simulated data set")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep", type=int, default=0, help="replication index")
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--H", type=int, default=120)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="Monte Carlo benchmark over replications")
    _common(p, fit_like=False)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="ftf,fhp", help="comma list of ftf, fhp, sftf, fpc")
    p.add_argument("--k", type=int, nargs="+", default=[0], help="difference order(s)")
    p.add_argument("--basis", type=int, default=5)
    p.add_argument("--lambda-grid", default="1e-3:1e3:60:log")
    p.add_argument("--psi-grid", default="1e-1:1e1:20:log")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--H", type=int, default=120)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, UsageError, DimensionError, CoverageError) as exc:
        print(f"ftrend: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"ftrend: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"ftrend: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
