"""Command line front end.

Subcommands: solve, power-curve, phase-boundary, simulate, compare,
lambda-opt.  Parameters come from built-in defaults, overridden by an
optional JSON config file (--config), overridden by flags.  Curves are
written as CSV with a fixed column order, nested records as JSON, and every
table gets a rendered PNG next to it unless --no-plot is given.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 compare-verdict failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import plotting
from .dko_theory import (
    SelectionThresholds,
    dko_prediction_error,
    dko_tpr_fdr,
    solve_dko,
)
from .fixed_point import DivergenceError, SolverSettings
from .power import optimal_lambda, power_curve
from .recon_limit import NoFiniteVError, phase_boundary_curve
from .simulator import LassoConvergenceError, LassoSettings, run_experiment_grid
from .ss_theory import (
    ProblemConfig,
    solve_ss,
    ss_prediction_error,
    ss_tpr_fdr,
    vanilla_lasso_solution,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERDICT = 3


class ConfigError(ValueError):
    """Bad usage, config file, or input tables."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we reserve 2 for numerics
        raise ConfigError(message)


@dataclass
class RunConfig:
    """Fully merged run parameters (defaults < config file < flags)."""

    alpha: float = 2.5
    rho: float = 0.3
    delta: float = 0.01
    lam: float = 0.1
    mu_b: float = 1.0
    pi_th: float = 0.15
    z_th: float = 0.05
    n: int = 64
    repeats: int = 128
    realizations: int = 200
    seed: int = 12345
    workers: int = 1
    points: int = 400
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000

    def problem(self, lam: float | None = None) -> ProblemConfig:
        return ProblemConfig(
            alpha=self.alpha,
            rho=self.rho,
            delta=self.delta,
            lam=self.lam if lam is None else lam,
            mu_b=self.mu_b,
        )

    def solver(self) -> SolverSettings:
        return SolverSettings(damping=self.damping, tol=self.tol, max_iter=self.max_iter)

    def thresholds(self) -> SelectionThresholds:
        return SelectionThresholds(z_th=self.z_th, pi_th=self.pi_th)


_FILE_KEYS = {
    "problem": ("alpha", "rho", "delta", "lam", "mu_b"),
    "thresholds": ("pi_th", "z_th"),
    "simulate": ("n", "repeats", "realizations"),
    "solver": ("damping", "tol", "max_iter"),
}


def _load_config_file(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    flat: dict = {}
    for section, keys in _FILE_KEYS.items():
        entries = payload.get(section, {})
        if not isinstance(entries, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in entries:
            if key == "lambda":
                flat["lam"] = entries[key]
            elif key in keys:
                flat[key] = entries[key]
            else:
                raise ConfigError(f"unknown key {key!r} in config section {section!r}")
    for key in ("seed", "workers", "points", "lambda_grid", "rho_grid", "out"):
        if key in payload:
            flat[key] = payload[key]
    return flat


def parse_grid(text) -> np.ndarray:
    """Grid syntax: 'log:lo:hi:k', 'lin:lo:hi:k', or comma-separated values."""
    if isinstance(text, (list, tuple)):
        grid = np.asarray(text, dtype=float)
    else:
        parts = str(text).split(":")
        if parts[0] in ("log", "lin") and len(parts) == 4:
            lo, hi, k = float(parts[1]), float(parts[2]), int(parts[3])
            if k < 1 or hi <= lo:
                raise ConfigError(f"bad grid spec {text!r}")
            space = np.geomspace if parts[0] == "log" else np.linspace
            grid = space(lo, hi, k)
        else:
            try:
                grid = np.array([float(v) for v in str(text).split(",")], dtype=float)
            except ValueError as exc:
                raise ConfigError(f"bad grid spec {text!r}") from exc
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be nonempty and strictly increasing")
    return grid


def _merge_config(args: argparse.Namespace) -> tuple[RunConfig, dict]:
    file_conf = _load_config_file(args.config) if args.config else {}
    cfg = RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            overrides[f.name] = flag_val
        elif f.name in file_conf:
            overrides[f.name] = file_conf[f.name]
    cfg = replace(cfg, **overrides)
    extras = {}
    for key in ("lambda_grid", "rho_grid", "out"):
        flag_val = getattr(args, key, None)
        extras[key] = flag_val if flag_val is not None else file_conf.get(key)
    try:
        cfg.problem()
        cfg.solver()
        cfg.thresholds()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, extras


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _figure_path(out: Path) -> Path:
    return out.with_suffix(".png")


# --------------------------------------------------------------------------
# solve


_SS_COLUMNS = [
    "theory",
    "lambda",
    "q",
    "m",
    "chi",
    "v",
    "q_hat",
    "m_hat",
    "chi_hat",
    "v_hat",
    "residual",
    "iterations",
    "converged",
    "prediction_error",
    "tpr",
    "fdr",
]
_DKO_COLUMNS = [
    "theory",
    "lambda",
    "q",
    "m",
    "chi",
    "v",
    "v_knock",
    "chi_knock",
    "q_hat",
    "q_hat_knock",
    "m_hat",
    "chi_hat",
    "v_hat",
    "v_hat_knock",
    "residual",
    "iterations",
    "converged",
    "prediction_error",
    "tpr",
    "fdr",
]


def solve_rows(theory: str, cfg: RunConfig, grid: np.ndarray) -> list[dict]:
    rows = []
    settings = cfg.solver()
    for lam in grid:
        problem = cfg.problem(float(lam))
        if theory == "dko":
            sol = solve_dko(problem, settings)
            tpr, fdr = dko_tpr_fdr(sol, cfg.thresholds())
            row = {
                "theory": theory,
                "lambda": float(lam),
                **{k: getattr(sol.order, k) for k in ("q", "m", "chi", "v", "v_knock", "chi_knock")},
                **{
                    k: getattr(sol.hats, k)
                    for k in ("q_hat", "q_hat_knock", "m_hat", "chi_hat", "v_hat", "v_hat_knock")
                },
                "prediction_error": dko_prediction_error(sol),
            }
        else:
            if theory == "lasso":
                sol = vanilla_lasso_solution(problem, settings)
            else:
                sol = solve_ss(problem, settings)
            tpr, fdr = ss_tpr_fdr(sol, cfg.pi_th)
            row = {
                "theory": theory,
                "lambda": float(lam),
                **{k: getattr(sol.order, k) for k in ("q", "m", "chi", "v")},
                **{k: getattr(sol.hats, k) for k in ("q_hat", "m_hat", "chi_hat", "v_hat")},
                "prediction_error": ss_prediction_error(sol),
            }
        row.update(
            residual=sol.report.residual,
            iterations=sol.report.iterations,
            converged=sol.report.converged,
            tpr=tpr,
            fdr=fdr,
        )
        rows.append(row)
    return rows


def _cmd_solve(args) -> int:
    cfg, extras = _merge_config(args)
    grid = parse_grid(extras["lambda_grid"]) if extras["lambda_grid"] else np.array([cfg.lam])
    rows = solve_rows(args.theory, cfg, grid)
    out = Path(extras["out"] or f"solve_{args.theory}.csv")
    _write_csv(out, _DKO_COLUMNS if args.theory == "dko" else _SS_COLUMNS, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_plot:
        print(f"wrote {plotting.plot_solution_table(rows, args.theory, _figure_path(out))}")
    return EXIT_OK


# --------------------------------------------------------------------------
# power-curve


def _cmd_power_curve(args) -> int:
    cfg, extras = _merge_config(args)
    lam = cfg.lam if args.lam is not None else None
    sweep_kind = {"ss": "pi_th", "dko": "z_th", "ko": "z_th", "lasso": "lambda"}[args.algorithm]
    thresholds = None
    if getattr(args, "threshold_grid", None):
        thresholds = parse_grid(args.threshold_grid)
    elif sweep_kind == "pi_th":
        thresholds = np.linspace(1e-3, 0.999, cfg.points)
    lambda_grid = parse_grid(extras["lambda_grid"]) if extras["lambda_grid"] else None
    curve = power_curve(
        args.algorithm,
        cfg.problem(),
        lam=lam,
        settings=cfg.solver(),
        thresholds=thresholds,
        lambda_grid=lambda_grid,
    )
    lam_used = lam if lam is not None else (
        None if args.algorithm == "lasso" else optimal_lambda(args.algorithm, cfg.problem(), cfg.solver())
    )
    rows = [
        {
            "algorithm": args.algorithm,
            "threshold_kind": sweep_kind,
            "threshold": float(t),
            "lambda": float(t) if args.algorithm == "lasso" else lam_used,
            "fdr": float(f),
            "tpr": float(p),
        }
        for t, f, p in zip(curve.thresholds, curve.fdr, curve.tpr)
    ]
    out = Path(extras["out"] or f"power_{args.algorithm}.csv")
    _write_csv(out, ["algorithm", "threshold_kind", "threshold", "lambda", "fdr", "tpr"], rows)
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_plot:
        figure = plotting.plot_power_curves(
            {args.algorithm: (curve.fdr, curve.tpr)}, _figure_path(out)
        )
        print(f"wrote {figure}")
    return EXIT_OK


# --------------------------------------------------------------------------
# phase-boundary


def _cmd_phase_boundary(args) -> int:
    cfg, extras = _merge_config(args)
    rho_grid = (
        parse_grid(extras["rho_grid"]) if extras["rho_grid"] else np.linspace(0.05, 0.95, 19)
    )
    points = []
    points += phase_boundary_curve("ss", rho_grid, mu_b=1.0)
    points += phase_boundary_curve("ss", rho_grid, mu_b=2.0)
    points += phase_boundary_curve("dko", rho_grid)
    rows = [
        {"algorithm": p.algorithm, "rho": p.rho, "alpha_critical": p.alpha_critical}
        for p in points
    ]
    out = Path(extras["out"] or "phase_boundary.csv")
    _write_csv(out, ["algorithm", "rho", "alpha_critical"], rows)
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_plot:
        print(f"wrote {plotting.plot_phase_boundary(points, _figure_path(out))}")
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def simulate_payload(algorithm: str, cfg: RunConfig, grid: np.ndarray) -> dict:
    seeds = np.random.SeedSequence(cfg.seed).generate_state(
        2 * cfg.realizations, np.uint64
    )
    results = run_experiment_grid(
        cfg.n,
        cfg.problem(),
        algorithm,
        grid,
        cfg.repeats,
        cfg.realizations,
        cfg.thresholds(),
        cfg.seed,
        LassoSettings(),
        workers=cfg.workers,
    )
    per_lambda = []
    for lam, res in zip(grid, results):
        per_lambda.append(
            {
                "lambda": float(lam),
                "order_params": res.order_params,
                "tpr": res.tpr,
                "fdr": res.fdr,
                "std_errors": res.std_errors,
                "selection_prob": [float(x) for x in res.selection_prob],
            }
        )
    return {
        "algorithm": algorithm,
        "n": cfg.n,
        "config": {
            "alpha": cfg.alpha,
            "rho": cfg.rho,
            "delta": cfg.delta,
            "mu_b": cfg.mu_b,
        },
        "thresholds": {"pi_th": cfg.pi_th, "z_th": cfg.z_th},
        "repeats": cfg.repeats,
        "realizations": cfg.realizations,
        "master_seed": cfg.seed,
        "realization_seeds": {
            "data": [int(s) for s in seeds[0::2]],
            "algorithm": [int(s) for s in seeds[1::2]],
        },
        "lambda_grid": [float(x) for x in grid],
        "per_lambda": per_lambda,
    }


def _cmd_simulate(args) -> int:
    cfg, extras = _merge_config(args)
    grid = parse_grid(extras["lambda_grid"]) if extras["lambda_grid"] else np.array([cfg.lam])
    payload = simulate_payload(args.algorithm, cfg, grid)
    out = Path(extras["out"] or f"simulate_{args.algorithm}.json")
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out}")
    if not args.no_plot:
        print(f"wrote {plotting.plot_simulation(payload, _figure_path(out))}")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare


_COMPARABLE = ("q", "m", "v", "v_knock", "tpr", "fdr")
_ABS_FALLBACK = 1e-8
_Z_CELL = 4.0
_Z_HARD = 6.0
_PASS_FRACTION = 0.9


def compare_tables(theory_rows: list[dict], empirical: dict) -> tuple[list[dict], bool]:
    """Per-(statistic, lambda) z-scores and the overall verdict.

    A cell passes at |z| <= 4 (absolute fallback 1e-8 when the standard error
    vanishes); the run passes when at least 90% of cells pass and every cell
    stays within 6 standard errors.
    """
    th_lams = np.array([float(r["lambda"]) for r in theory_rows])
    emp_lams = np.array([rec["lambda"] for rec in empirical["per_lambda"]])
    if th_lams.size != emp_lams.size or not np.allclose(
        th_lams, emp_lams, rtol=1e-9, atol=0.0
    ):
        raise ConfigError("theory and empirical lambda grids do not match")
    stats = [
        k
        for k in _COMPARABLE
        if k in theory_rows[0]
        and (k in empirical["per_lambda"][0]["order_params"] or k in ("tpr", "fdr"))
    ]
    rows = []
    for th_row, emp_rec in zip(theory_rows, empirical["per_lambda"]):
        for key in stats:
            theory_val = float(th_row[key])
            emp_val = float(
                emp_rec[key] if key in ("tpr", "fdr") else emp_rec["order_params"][key]
            )
            se = float(emp_rec["std_errors"][key])
            diff = abs(theory_val - emp_val)
            z = diff / se if se > 0 else (0.0 if diff <= _ABS_FALLBACK else np.inf)
            rows.append(
                {
                    "statistic": key,
                    "lambda": float(th_row["lambda"]),
                    "theory": theory_val,
                    "empirical": emp_val,
                    "std_error": se,
                    "z": z,
                    "pass": z <= _Z_CELL,
                }
            )
    z_values = np.array([r["z"] for r in rows])
    overall = (np.mean(z_values <= _Z_CELL) >= _PASS_FRACTION) and np.all(
        z_values <= _Z_HARD
    )
    return rows, bool(overall)


def _read_theory_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read theory table {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"theory table {path} is empty")
    return rows


def _cmd_compare(args) -> int:
    theory_rows = _read_theory_csv(args.theory_table)
    try:
        empirical = json.loads(Path(args.empirical).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read empirical record {args.empirical}: {exc}") from exc
    rows, overall = compare_tables(theory_rows, empirical)
    out = Path(args.out or "compare_verdict.csv")
    _write_csv(
        out,
        ["statistic", "lambda", "theory", "empirical", "std_error", "z", "pass"],
        rows,
    )
    n_pass = sum(r["pass"] for r in rows)
    print(f"wrote {out}: {n_pass}/{len(rows)} cells within {_Z_CELL} SE; "
          f"overall {'PASS' if overall else 'FAIL'}")
    if not args.no_plot:
        print(f"wrote {plotting.plot_compare(rows, _figure_path(out))}")
    return EXIT_OK if overall else EXIT_VERDICT


# --------------------------------------------------------------------------
# lambda-opt


def _cmd_lambda_opt(args) -> int:
    cfg, extras = _merge_config(args)
    lam_star = optimal_lambda(args.algorithm, cfg.problem(), cfg.solver())
    problem = cfg.problem(lam_star)
    if args.algorithm in ("dko", "ko"):
        err = dko_prediction_error(solve_dko(problem, cfg.solver()))
    elif args.algorithm == "lasso":
        err = ss_prediction_error(vanilla_lasso_solution(problem, cfg.solver()))
    else:
        err = ss_prediction_error(solve_ss(problem, cfg.solver()))
    payload = {
        "algorithm": args.algorithm,
        "lambda_star": lam_star,
        "prediction_error": err,
        "config": {
            "alpha": cfg.alpha,
            "rho": cfg.rho,
            "delta": cfg.delta,
            "mu_b": cfg.mu_b,
        },
    }
    out = Path(extras["out"] or f"lambda_opt_{args.algorithm}.json")
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"{args.algorithm}: lambda_star = {lam_star:.6g} "
          f"(prediction error {err:.6g}); wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser assembly


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--out", help="output path (CSV or JSON per command)")
    sub.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    sub.add_argument("--seed", type=int, help="master seed for stochastic commands")
    sub.add_argument("--workers", type=int, help="parallel workers for independent units")
    for flag, dest, typ in (
        ("--alpha", "alpha", float),
        ("--rho", "rho", float),
        ("--delta", "delta", float),
        ("--lambda", "lam", float),
        ("--mu-b", "mu_b", float),
        ("--pi-th", "pi_th", float),
        ("--z-th", "z_th", float),
        ("--n", "n", int),
        ("--repeats", "repeats", int),
        ("--realizations", "realizations", int),
        ("--points", "points", int),
        ("--damping", "damping", float),
        ("--tol", "tol", float),
        ("--max-iter", "max_iter", int),
    ):
        sub.add_argument(flag, dest=dest, type=typ)
    sub.add_argument("--lambda-grid", dest="lambda_grid",
                     help="grid spec: 'log:lo:hi:k', 'lin:lo:hi:k', or comma list")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="enselect", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("solve", help="solve a self-consistent system over a lambda grid")
    p.add_argument("theory", choices=["ss", "dko", "lasso"])
    _add_common(p)
    p.set_defaults(handler=_cmd_solve)

    p = subs.add_parser("power-curve", help="(FDR, TPR) sweep at the optimal lambda")
    p.add_argument("algorithm", choices=["ss", "dko", "ko", "lasso"])
    _add_common(p)
    p.add_argument("--threshold-grid", dest="threshold_grid",
                   help="explicit sweep grid (overrides --points)")
    p.set_defaults(handler=_cmd_power_curve)

    p = subs.add_parser("phase-boundary", help="perfect-reconstruction boundaries")
    _add_common(p)
    p.add_argument("--rho-grid", dest="rho_grid",
                   help="grid spec for rho (default lin:0.05:0.95:19)")
    p.set_defaults(handler=_cmd_phase_boundary)

    p = subs.add_parser("simulate", help="finite-size Monte Carlo protocol")
    p.add_argument("algorithm", choices=["ss", "dko"])
    _add_common(p)
    p.set_defaults(handler=_cmd_simulate)

    p = subs.add_parser("compare", help="theory vs Monte Carlo verdict table")
    p.add_argument("theory_table", help="CSV from the solve command")
    p.add_argument("empirical", help="JSON from the simulate command")
    p.add_argument("--out", help="verdict CSV path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_compare)

    p = subs.add_parser("lambda-opt", help="prediction-error-optimal lambda")
    p.add_argument("algorithm", choices=["ss", "dko", "ko", "lasso"])
    _add_common(p)
    p.set_defaults(handler=_cmd_lambda_opt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, LassoConvergenceError, NoFiniteVError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
