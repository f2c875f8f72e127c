"""Figure rendering for the CLI: every table gets a picture next to it.

Uses the Agg backend so runs are headless-safe; each helper takes the rows
already written to disk and returns the saved path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STAT_LABELS = {
    "q": "q (self overlap)",
    "m": "m (overlap with truth)",
    "v": "v (resampling variance)",
    "v_knock": "v_knock (knockoff variance)",
    "chi": "chi (susceptibility)",
    "chi_knock": "chi_knock",
    "tpr": "TPR",
    "fdr": "FDR",
}


def _finish(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_solution_table(rows: list[dict], theory: str, path: Path) -> Path:
    """Order parameters and TPR/FDR against lambda for one theory."""
    lams = [r["lambda"] for r in rows]
    stats = [k for k in ("q", "m", "v", "v_knock") if k in rows[0]]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for key in stats:
        ax1.plot(lams, [r[key] for r in rows], marker="o", ms=3, label=key)
    ax1.set_xscale("log")
    ax1.set_xlabel("lambda")
    ax1.set_ylabel("order parameters")
    ax1.legend(fontsize=8)
    for key in ("tpr", "fdr"):
        ax2.plot(lams, [r[key] for r in rows], marker="o", ms=3, label=key.upper())
    ax2.set_xscale("log")
    ax2.set_xlabel("lambda")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend(fontsize=8)
    fig.suptitle(f"{theory} self-consistent solution")
    return _finish(fig, path)


def plot_power_curves(curves: dict[str, tuple], path: Path) -> Path:
    """Detection power: TPR against FDR, one line per algorithm."""
    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    for name, (fdr, tpr) in curves.items():
        ax.plot(fdr, tpr, label=name, lw=1.4)
    ax.set_xlabel("FDR")
    ax.set_ylabel("TPR")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    ax.set_title("detection power")
    return _finish(fig, path)


def plot_phase_boundary(points: list, path: Path) -> Path:
    """Critical sample ratio against sparsity, one line per algorithm."""
    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    by_algo: dict[str, list] = {}
    for p in points:
        by_algo.setdefault(p.algorithm, []).append(p)
    for algo, pts in by_algo.items():
        ax.plot(
            [p.rho for p in pts],
            [p.alpha_critical for p in pts],
            marker="o",
            ms=3,
            label=algo,
        )
    ax.set_xlabel("rho")
    ax.set_ylabel("critical alpha")
    ax.legend(fontsize=8)
    ax.set_title("perfect reconstruction limits")
    return _finish(fig, path)


def plot_simulation(payload: dict, path: Path) -> Path:
    """Monte Carlo statistics against lambda with standard-error bars."""
    lams = payload["lambda_grid"]
    records = payload["per_lambda"]
    keys = [k for k in records[0]["order_params"] if k != "knock_mean"]
    keys += ["tpr", "fdr"]
    fig, axes = plt.subplots(1, len(keys), figsize=(2.6 * len(keys), 3.0))
    for ax, key in zip(axes, keys):
        if key in ("tpr", "fdr"):
            vals = [r[key] for r in records]
        else:
            vals = [r["order_params"][key] for r in records]
        errs = [r["std_errors"][key] for r in records]
        ax.errorbar(lams, vals, yerr=errs, fmt="o", ms=3, capsize=2)
        ax.set_xscale("log")
        ax.set_xlabel("lambda")
        ax.set_title(_STAT_LABELS.get(key, key), fontsize=9)
    fig.suptitle(f"{payload['algorithm']} Monte Carlo (N={payload['n']})")
    return _finish(fig, path)


def plot_compare(verdict_rows: list[dict], path: Path) -> Path:
    """Theory lines over empirical error bars, one panel per statistic."""
    stats = sorted({r["statistic"] for r in verdict_rows})
    fig, axes = plt.subplots(1, len(stats), figsize=(2.6 * len(stats), 3.0))
    if len(stats) == 1:
        axes = [axes]
    for ax, key in zip(axes, stats):
        rows = [r for r in verdict_rows if r["statistic"] == key]
        lams = [r["lambda"] for r in rows]
        ax.errorbar(
            lams,
            [r["empirical"] for r in rows],
            yerr=[r["std_error"] for r in rows],
            fmt="o",
            ms=3,
            capsize=2,
            label="experiment",
        )
        ax.plot(lams, [r["theory"] for r in rows], "-", lw=1.2, label="theory")
        ax.set_xscale("log")
        ax.set_xlabel("lambda")
        ax.set_title(_STAT_LABELS.get(key, key), fontsize=9)
    axes[0].legend(fontsize=7)
    return _finish(fig, path)
