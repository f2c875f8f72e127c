"""Detection-power curves: (FDR, TPR) sweeps at the prediction-optimal lambda.

Each algorithm sweeps its natural knob: SS the probability threshold, dKO
and vanilla KO the coefficient-difference threshold (dKO at a fixed small
probability threshold), and the vanilla lasso its regularization strength.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dko_theory import (
    DkoSolution,
    SelectionThresholds,
    dko_prediction_error,
    dko_tpr_fdr,
    solve_dko,
    vanilla_ko_tpr_fdr,
)
from .fixed_point import SolverSettings
from .ss_theory import (
    ProblemConfig,
    SsSolution,
    ss_prediction_error,
    ss_tpr_fdr,
    solve_ss,
    vanilla_lasso_solution,
)

__all__ = [
    "PowerCurve",
    "DKO_SWEEP_PI_TH",
    "golden_section_lambda",
    "optimal_lambda",
    "ss_power_curve",
    "dko_power_curve",
    "ko_power_curve",
    "lasso_power_curve",
    "power_curve",
    "tpr_at_fdr",
]

# Probability threshold held fixed while dKO sweeps the LCD threshold.
DKO_SWEEP_PI_TH = 0.025

LAMBDA_OPT_RANGE = (1e-3, 10.0)
LAMBDA_OPT_LOG_TOL = 1e-3

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PowerCurve:
    """(FDR, TPR) points swept over a threshold, plus the sweep values."""

    algorithm: str
    thresholds: np.ndarray
    fdr: np.ndarray
    tpr: np.ndarray


def golden_section_lambda(objective, lo: float, hi: float, log_tol: float) -> float:
    """Golden-section minimizer of objective(lam) over log lam in [lo, hi]."""
    a, b = np.log(lo), np.log(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(np.exp(c)), objective(np.exp(d))
    while b - a > log_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(np.exp(d))
    return float(np.exp(0.5 * (a + b)))


def optimal_lambda(
    algorithm: str,
    config: ProblemConfig,
    settings: SolverSettings = SolverSettings(),
) -> float:
    """Lambda minimizing the asymptotic fresh-sample error of one draw."""

    def objective(lam: float) -> float:
        cfg = ProblemConfig(config.alpha, config.rho, config.delta, lam, config.mu_b)
        if algorithm in ("dko", "ko"):
            return dko_prediction_error(solve_dko(cfg, settings))
        if algorithm in ("ss", "lasso"):
            if algorithm == "lasso":
                return ss_prediction_error(vanilla_lasso_solution(cfg, settings))
            return ss_prediction_error(solve_ss(cfg, settings))
        raise ValueError(f"unknown algorithm {algorithm!r}")

    lo, hi = LAMBDA_OPT_RANGE
    return golden_section_lambda(objective, lo, hi, LAMBDA_OPT_LOG_TOL)


def default_pi_th_grid(points: int = 400) -> np.ndarray:
    return np.linspace(1e-3, 0.999, points)


def default_z_th_grid(sol: DkoSolution, points: int = 400) -> np.ndarray:
    """LCD thresholds from 0 up past the largest plausible coefficient."""
    h = sol.hats
    scale = (np.sqrt(h.m_hat**2 + h.chi_hat + h.v_hat) * 8.0) / h.q_hat
    return np.linspace(0.0, scale, points)


def ss_power_curve(sol: SsSolution, pi_th_grid: np.ndarray | None = None) -> PowerCurve:
    grid = default_pi_th_grid() if pi_th_grid is None else np.asarray(pi_th_grid, float)
    pairs = [ss_tpr_fdr(sol, float(p)) for p in grid]
    tpr, fdr = np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
    return PowerCurve("ss", grid, fdr, tpr)


def dko_power_curve(
    sol: DkoSolution,
    z_th_grid: np.ndarray | None = None,
    pi_th: float = DKO_SWEEP_PI_TH,
) -> PowerCurve:
    grid = default_z_th_grid(sol) if z_th_grid is None else np.asarray(z_th_grid, float)
    pairs = [
        dko_tpr_fdr(sol, SelectionThresholds(z_th=float(z), pi_th=pi_th)) for z in grid
    ]
    tpr, fdr = np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
    return PowerCurve("dko", grid, fdr, tpr)


def ko_power_curve(sol: DkoSolution, z_th_grid: np.ndarray | None = None) -> PowerCurve:
    grid = default_z_th_grid(sol) if z_th_grid is None else np.asarray(z_th_grid, float)
    pairs = [vanilla_ko_tpr_fdr(sol, float(z)) for z in grid]
    tpr, fdr = np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
    return PowerCurve("ko", grid, fdr, tpr)


def lasso_power_curve(
    config: ProblemConfig,
    lambda_grid: np.ndarray,
    settings: SolverSettings = SolverSettings(),
) -> PowerCurve:
    """Vanilla-lasso sweep: one deterministic selection set per lambda."""
    grid = np.asarray(lambda_grid, dtype=float)
    tpr = np.empty(grid.size)
    fdr = np.empty(grid.size)
    for i, lam in enumerate(grid):
        cfg = ProblemConfig(config.alpha, config.rho, config.delta, float(lam), config.mu_b)
        sol = vanilla_lasso_solution(cfg, settings)
        tpr[i], fdr[i] = ss_tpr_fdr(sol, 0.5)
    return PowerCurve("lasso", grid, fdr, tpr)


def power_curve(
    algorithm: str,
    config: ProblemConfig,
    lam: float | None = None,
    settings: SolverSettings = SolverSettings(),
    thresholds: np.ndarray | None = None,
    lambda_grid: np.ndarray | None = None,
) -> PowerCurve:
    """Assemble one algorithm's power curve at lam (default: its optimal lambda)."""
    if algorithm == "lasso":
        if lambda_grid is None:
            lambda_grid = np.geomspace(*LAMBDA_OPT_RANGE, 60)
        return lasso_power_curve(config, lambda_grid, settings)
    if lam is None:
        lam = optimal_lambda(algorithm, config, settings)
    cfg = ProblemConfig(config.alpha, config.rho, config.delta, lam, config.mu_b)
    if algorithm == "ss":
        return ss_power_curve(solve_ss(cfg, settings), thresholds)
    sol = solve_dko(cfg, settings)
    if algorithm == "dko":
        return dko_power_curve(sol, thresholds)
    if algorithm == "ko":
        return ko_power_curve(sol, thresholds)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def tpr_at_fdr(curve: PowerCurve, fdr_target: float) -> float:
    """TPR linearly interpolated at the target FDR along the swept curve.

    The curve is reduced to its achievable upper envelope (best TPR at or
    below each FDR) before interpolating; targets outside the covered range
    clamp to the nearest endpoint.
    """
    order = np.argsort(curve.fdr, kind="stable")
    fdr, tpr = curve.fdr[order], np.maximum.accumulate(curve.tpr[order])
    return float(np.interp(fdr_target, fdr, tpr))
