"""Finite-size Monte Carlo used to validate the asymptotic theory.

Work is organized so that every random quantity flows from an explicit seed:
one dataset per (n, config, data_seed), one randomization stream per
realization, and per-realization seeds derived deterministically from a
master seed.  Realizations are independent work units and may run in
parallel without changing any number.

The lasso is solved on the raw sum-of-squares objective

    sum_mu weight_mu * (y_mu - x_mu . w)^2 / 2 + lam * ||w||_1

by cyclic coordinate descent with exact coordinate updates; bootstrap
resampling enters through the integer count weights, and knockoff fits run
on the column-concatenated design with unit weights.  Every returned
solution is KKT-verified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from .dko_theory import SelectionThresholds
from .ss_theory import ProblemConfig

__all__ = [
    "Dataset",
    "LassoSettings",
    "EmpiricalResult",
    "LassoConvergenceError",
    "generate_dataset",
    "lasso_coordinate_descent",
    "kkt_violation",
    "bootstrap_counts",
    "generate_knockoff",
    "ss_empirical",
    "dko_empirical",
    "empirical_tpr_fdr",
    "run_experiment",
    "run_experiment_grid",
]


@dataclass(frozen=True)
class Dataset:
    """One draw of design (rows iid N(0, I/N)), responses, and truth."""

    design: np.ndarray
    responses: np.ndarray
    truth: np.ndarray
    dims: tuple[int, int]


@dataclass(frozen=True)
class LassoSettings:
    """Coordinate-descent controls; tol is the max coordinate update."""

    tol: float = 1e-11
    max_sweeps: int = 100_000
    kkt_tol: float = 1e-8

    def __post_init__(self):
        if self.tol <= 0 or self.kkt_tol <= 0 or self.max_sweeps < 1:
            raise ValueError(f"invalid lasso settings {self}")


class LassoConvergenceError(RuntimeError):
    """Sweep budget exhausted; carries the last iterate and its KKT residual."""

    def __init__(self, message: str, last_iterate: np.ndarray, kkt_residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.kkt_residual = kkt_residual


@dataclass(frozen=True)
class EmpiricalResult:
    """Monte Carlo estimates aggregated over independent data realizations.

    ``selection_prob`` is the per-coordinate selection frequency averaged
    over realizations; ``order_params`` and ``std_errors`` share keys
    (q, m, v, tpr, fdr, plus v_knock and knock_mean for knockoff runs).
    ``realizations`` is (data draws, randomization draws per dataset).
    """

    selection_prob: np.ndarray
    order_params: dict[str, float]
    tpr: float
    fdr: float
    std_errors: dict[str, float]
    realizations: tuple[int, int]


def generate_dataset(n: int, config: ProblemConfig, seed: int) -> Dataset:
    """Draw one dataset: y = X w0 + noise with Gauss-Bernoulli truth."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    m = int(round(config.alpha * n))
    rng = np.random.default_rng(seed)
    design = rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n))
    mask = rng.random(n) < config.rho
    truth = np.where(mask, rng.normal(0.0, 1.0, size=n), 0.0)
    noise = rng.normal(0.0, np.sqrt(config.delta), size=m) if config.delta > 0 else 0.0
    responses = design @ truth + noise
    return Dataset(design=design, responses=responses, truth=truth, dims=(m, n))


@njit(cache=True)
def _cd_sweeps(x, y, lam, weights, w, tol, max_sweeps):  # pragma: no cover
    m, n = x.shape
    d = np.zeros(n)
    for j in range(n):
        acc = 0.0
        for mu in range(m):
            acc += weights[mu] * x[mu, j] * x[mu, j]
        d[j] = acc
    r = y - x @ w
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(n):
            wj = w[j]
            if d[j] <= 0.0:
                if wj != 0.0:
                    for mu in range(m):
                        r[mu] += x[mu, j] * wj
                    w[j] = 0.0
                continue
            g = 0.0
            for mu in range(m):
                g += weights[mu] * x[mu, j] * r[mu]
            g += d[j] * wj
            if g > lam:
                new = (g - lam) / d[j]
            elif g < -lam:
                new = (g + lam) / d[j]
            else:
                new = 0.0
            delta = new - wj
            if delta != 0.0:
                for mu in range(m):
                    r[mu] -= x[mu, j] * delta
                w[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta <= tol:
            return sweep + 1
    return -1


def kkt_violation(
    design: np.ndarray,
    responses: np.ndarray,
    lam: float,
    w: np.ndarray,
    weights: np.ndarray | None = None,
) -> float:
    """Worst-case stationarity violation of the weighted lasso objective.

    Zero coordinates must satisfy |g_i| <= lam; active ones g_i = lam sign(w_i),
    where g is the gradient of the smooth part at w.
    """
    if weights is None:
        weights = np.ones(design.shape[0])
    g = (weights * (responses - design @ w)) @ design
    active = w != 0.0
    viol_zero = np.maximum(np.abs(g[~active]) - lam, 0.0)
    viol_active = np.abs(g[active] - lam * np.sign(w[active]))
    worst = 0.0
    if viol_zero.size:
        worst = max(worst, float(viol_zero.max()))
    if viol_active.size:
        worst = max(worst, float(viol_active.max()))
    return worst


def lasso_coordinate_descent(
    design: np.ndarray,
    responses: np.ndarray,
    lam: float,
    weights: np.ndarray | None = None,
    settings: LassoSettings = LassoSettings(),
    w_init: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize the (count-)weighted lasso objective by coordinate descent."""
    design = np.ascontiguousarray(design, dtype=float)
    m, n = design.shape
    responses = np.asarray(responses, dtype=float)
    if responses.shape != (m,):
        raise ValueError("responses length must match the design rows")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if weights is None:
        weights = np.ones(m)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (m,) or np.any(weights < 0):
            raise ValueError("weights must be a nonnegative length-M vector")
    w = np.zeros(n) if w_init is None else np.array(w_init, dtype=float)
    if w.shape != (n,):
        raise ValueError("w_init length must match the design columns")

    sweeps = _cd_sweeps(design, responses, lam, weights, w, settings.tol, settings.max_sweeps)
    residual = kkt_violation(design, responses, lam, w, weights)
    if sweeps < 0 or residual > settings.kkt_tol:
        raise LassoConvergenceError(
            f"coordinate descent did not reach KKT tolerance "
            f"(sweeps={'exhausted' if sweeps < 0 else sweeps}, kkt={residual:.3e})",
            w,
            residual,
        )
    return w


def bootstrap_counts(m: int, mu_b: float, seed: int) -> np.ndarray:
    """Multiplicity of each original point among round(mu_b * m) draws."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if mu_b <= 0:
        raise ValueError(f"mu_b must be positive, got {mu_b}")
    m_b = int(round(mu_b * m))
    rng = np.random.default_rng(seed)
    return np.bincount(rng.integers(0, m, size=m_b), minlength=m)


def generate_knockoff(m: int, n: int, seed: int) -> np.ndarray:
    """Synthetic design copy: iid N(0, 1/n) entries."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(n), size=(m, n))


def empirical_tpr_fdr(
    selection_prob: np.ndarray, truth: np.ndarray, pi_th: float
) -> tuple[float, float]:
    """Support-recovery rates of the set {i : selection_prob_i > pi_th}.

    No signals gives TPR = 0; an empty selection gives FDR = 0.
    """
    selection_prob = np.asarray(selection_prob, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if selection_prob.shape != truth.shape:
        raise ValueError("selection_prob and truth must have equal length")
    selected = selection_prob > pi_th
    signal = truth != 0.0
    n_signal = int(signal.sum())
    n_selected = int(selected.sum())
    tpr = float((selected & signal).sum() / n_signal) if n_signal else 0.0
    fdr = float((selected & ~signal).sum() / n_selected) if n_selected else 0.0
    return tpr, fdr


def _lambda_path(lambdas: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Validated ascending grid plus the descending solve order (warm starts)."""
    grid = np.asarray(lambdas, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ValueError("lambda grid must be a nonempty positive 1D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("lambda grid must be strictly increasing")
    return grid, grid[::-1]


def _ss_path_stats(
    data: Dataset,
    lambdas: np.ndarray,
    mu_b: float,
    repeats: int,
    seed: int,
    settings: LassoSettings,
) -> dict[str, np.ndarray]:
    """Selection frequencies and order-parameter estimates per lambda."""
    m, n = data.dims
    grid, descending = _lambda_path(lambdas)
    n_lam = grid.size
    rng_seeds = np.random.SeedSequence(seed).generate_state(repeats, np.uint64)
    sel = np.zeros((n_lam, n))
    sum_w = np.zeros((n_lam, n))
    sum_w2 = np.zeros((n_lam, n))
    for r in range(repeats):
        counts = bootstrap_counts(m, mu_b, int(rng_seeds[r])).astype(float)
        w = np.zeros(n)
        for k, lam in enumerate(descending):
            w = lasso_coordinate_descent(
                data.design, data.responses, lam, counts, settings, w_init=w
            )
            idx = n_lam - 1 - k
            sel[idx] += w != 0.0
            sum_w[idx] += w
            sum_w2[idx] += w * w
    w_bar = sum_w / repeats
    var_r = np.maximum(sum_w2 - repeats * w_bar**2, 0.0) / (repeats - 1)
    return {
        "lambda": grid,
        "selection_prob": sel / repeats,
        "q": (w_bar**2).mean(axis=1),
        "m": (w_bar * data.truth).mean(axis=1),
        "v": var_r.mean(axis=1),
    }


def _dko_path_stats(
    data: Dataset,
    lambdas: np.ndarray,
    z_th: float,
    repeats: int,
    seed: int,
    settings: LassoSettings,
) -> dict[str, np.ndarray]:
    """Knockoff-draw statistics per lambda on the concatenated design."""
    m, n = data.dims
    grid, descending = _lambda_path(lambdas)
    n_lam = grid.size
    rng_seeds = np.random.SeedSequence(seed).generate_state(repeats, np.uint64)
    ones = np.ones(m)
    sel = np.zeros((n_lam, n))
    sum_w = np.zeros((n_lam, n))
    sum_w2 = np.zeros((n_lam, n))
    sum_wk = np.zeros((n_lam, n))
    sum_wk2 = np.zeros((n_lam, n))
    for r in range(repeats):
        knockoff = generate_knockoff(m, n, int(rng_seeds[r]))
        concat = np.concatenate([data.design, knockoff], axis=1)
        w = np.zeros(2 * n)
        for k, lam in enumerate(descending):
            w = lasso_coordinate_descent(
                concat, data.responses, lam, ones, settings, w_init=w
            )
            idx = n_lam - 1 - k
            w_sig, w_ko = w[:n], w[n:]
            sel[idx] += (np.abs(w_sig) - np.abs(w_ko)) > z_th
            sum_w[idx] += w_sig
            sum_w2[idx] += w_sig * w_sig
            sum_wk[idx] += w_ko
            sum_wk2[idx] += w_ko * w_ko
    w_bar = sum_w / repeats
    var_r = np.maximum(sum_w2 - repeats * w_bar**2, 0.0) / (repeats - 1)
    return {
        "lambda": grid,
        "selection_prob": sel / repeats,
        "q": (w_bar**2).mean(axis=1),
        "m": (w_bar * data.truth).mean(axis=1),
        "v": var_r.mean(axis=1),
        "v_knock": (sum_wk2 / repeats).mean(axis=1),
        "knock_mean": (sum_wk / repeats).mean(axis=1),
    }


def ss_empirical(
    data: Dataset,
    lam: float,
    mu_b: float,
    repeats: int,
    seed: int,
    settings: LassoSettings = LassoSettings(),
) -> dict[str, np.ndarray]:
    """Bootstrap-lasso selection frequencies and order parameters, one dataset."""
    if repeats < 2:
        raise ValueError(f"repeats must be >= 2, got {repeats}")
    stats = _ss_path_stats(data, np.array([lam]), mu_b, repeats, seed, settings)
    return {k: v[0] for k, v in stats.items() if k != "lambda"}


def dko_empirical(
    data: Dataset,
    lam: float,
    z_th: float,
    repeats: int,
    seed: int,
    settings: LassoSettings = LassoSettings(),
) -> dict[str, np.ndarray]:
    """Knockoff-draw selection frequencies and order parameters, one dataset."""
    if repeats < 2:
        raise ValueError(f"repeats must be >= 2, got {repeats}")
    stats = _dko_path_stats(data, np.array([lam]), z_th, repeats, seed, settings)
    return {k: v[0] for k, v in stats.items() if k != "lambda"}


def _realization_seeds(master_seed: int, count: int) -> np.ndarray:
    """Deterministic (data_seed, algo_seed) pairs; realization k is independent."""
    return np.random.SeedSequence(master_seed).generate_state(2 * count, np.uint64)


def _one_realization(
    n: int,
    config: ProblemConfig,
    algorithm: str,
    lambdas: np.ndarray,
    repeats: int,
    thresholds: SelectionThresholds,
    data_seed: int,
    algo_seed: int,
    settings: LassoSettings,
) -> dict[str, np.ndarray]:
    data = generate_dataset(n, config, data_seed)
    if algorithm == "ss":
        stats = _ss_path_stats(data, lambdas, config.mu_b, repeats, algo_seed, settings)
    elif algorithm == "dko":
        stats = _dko_path_stats(
            data, lambdas, thresholds.z_th, repeats, algo_seed, settings
        )
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    tpr = np.empty(lambdas.size)
    fdr = np.empty(lambdas.size)
    for k in range(lambdas.size):
        tpr[k], fdr[k] = empirical_tpr_fdr(
            stats["selection_prob"][k], data.truth, thresholds.pi_th
        )
    stats["tpr"] = tpr
    stats["fdr"] = fdr
    return stats


def run_experiment_grid(
    n: int,
    config: ProblemConfig,
    algorithm: str,
    lambdas: Sequence[float],
    repeats: int,
    data_realizations: int,
    thresholds: SelectionThresholds,
    master_seed: int,
    settings: LassoSettings = LassoSettings(),
    workers: int = 1,
) -> list[EmpiricalResult]:
    """Run the full protocol over a lambda grid, one EmpiricalResult per lambda.

    Lambdas share datasets and randomization draws (each draw is solved along
    the descending grid with warm starts), so curves are paired across lambda.
    """
    if data_realizations < 8:
        raise ValueError(f"data_realizations must be >= 8, got {data_realizations}")
    grid, _ = _lambda_path(lambdas)
    seeds = _realization_seeds(master_seed, data_realizations)
    jobs = (
        delayed(_one_realization)(
            n,
            config,
            algorithm,
            grid,
            repeats,
            thresholds,
            int(seeds[2 * k]),
            int(seeds[2 * k + 1]),
            settings,
        )
        for k in range(data_realizations)
    )
    records = Parallel(n_jobs=workers)(jobs)

    keys = [k for k in records[0] if k not in ("lambda", "selection_prob")]
    results = []
    for i in range(grid.size):
        order_params: dict[str, float] = {}
        std_errors: dict[str, float] = {}
        for key in keys:
            values = np.array([rec[key][i] for rec in records])
            order_params[key] = float(values.mean())
            std_errors[key] = float(values.std(ddof=1) / np.sqrt(values.size))
        sel = np.mean([rec["selection_prob"][i] for rec in records], axis=0)
        results.append(
            EmpiricalResult(
                selection_prob=sel,
                order_params={
                    k: v for k, v in order_params.items() if k not in ("tpr", "fdr")
                },
                tpr=order_params["tpr"],
                fdr=order_params["fdr"],
                std_errors=std_errors,
                realizations=(data_realizations, repeats),
            )
        )
    return results


def run_experiment(
    n: int,
    config: ProblemConfig,
    algorithm: str,
    repeats: int,
    data_realizations: int,
    thresholds: SelectionThresholds,
    master_seed: int,
    settings: LassoSettings = LassoSettings(),
    workers: int = 1,
) -> EmpiricalResult:
    """Aggregate the per-dataset protocol at the config's single lambda."""
    return run_experiment_grid(
        n,
        config,
        algorithm,
        [config.lam],
        repeats,
        data_realizations,
        thresholds,
        master_seed,
        settings,
        workers,
    )[0]
